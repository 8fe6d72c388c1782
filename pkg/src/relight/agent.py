"""Randomized-ensemble double-DQN signal controller with a tunable update-to-data ratio."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import nn
from .errors import ConfigurationError, DomainError
from .env import ACTION_INTERVAL


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest entry is overwritten first."""

    def __init__(self, capacity, obs_dim):
        if capacity <= 0:
            raise ConfigurationError("replay capacity must be positive")
        self.capacity = capacity
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros(capacity, dtype=np.intp)
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, obs_dim))
        self._pos = 0
        self._size = 0

    def __len__(self):
        return self._size

    def append(self, tr: Transition):
        i = self._pos
        self.s[i], self.a[i], self.r[i], self.s_next[i] = tr.s, tr.a, tr.r, tr.s_next
        self._pos = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size, rng):
        """Uniform draw without replacement inside the batch."""
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx]

    def transitions(self):
        """Stored transitions, oldest first."""
        start = self._pos if self._size == self.capacity else 0
        order = [(start + k) % self.capacity for k in range(self._size)]
        return [Transition(self.s[i].copy(), int(self.a[i]), float(self.r[i]), self.s_next[i].copy()) for i in order]


@dataclass
class UpdateStats:
    losses: list
    n_batches: int
    samples_consumed: int


@dataclass
class EpisodeStats:
    rewards: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    decision_queue: list = field(default_factory=list)
    n_updates: int = 0
    samples_consumed: int = 0

    @property
    def total_reward(self):
        return float(sum(self.rewards))


class RELightAgent(BaseEstimator):
    """Ensemble of ``n_networks`` online/target Q-network pairs acting by majority vote.

    Each environment decision is followed by ``utd_ratio`` gradient updates.
    Every update bootstraps from the minimum, over a fresh random subset of
    ``n_in_target`` members, of each member's double-Q estimate.

    ``fit(env)`` trains online on a :class:`relight.env.TrafficEnv`;
    ``predict(X)`` returns the greedy vote for each row of observations.
    """

    def __init__(
        self,
        n_networks=10,
        n_in_target=4,
        utd_ratio=40,
        gamma=0.8,
        epsilon=0.05,
        rho=0.995,
        batch_size=20,
        learning_rate=0.01,
        memory_size=1000,
        hidden_layer_sizes=(32, 32),
        clip_norm=nn.CLIP_NORM,
        random_state=0,
    ):
        self.n_networks = n_networks
        self.n_in_target = n_in_target
        self.utd_ratio = utd_ratio
        self.gamma = gamma
        self.epsilon = epsilon
        self.rho = rho
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.memory_size = memory_size
        self.hidden_layer_sizes = hidden_layer_sizes
        self.clip_norm = clip_norm
        self.random_state = random_state

    def _validate_params(self):
        if not (isinstance(self.n_networks, (int, np.integer)) and self.n_networks >= 1):
            raise ConfigurationError(f"n_networks must be >= 1, got {self.n_networks}")
        if not (1 <= self.n_in_target <= self.n_networks):
            raise ConfigurationError(
                f"n_in_target must satisfy 1 <= M <= N, got M={self.n_in_target}, N={self.n_networks}"
            )
        if self.utd_ratio < 0:
            raise ConfigurationError("utd_ratio must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError("gamma must lie in [0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigurationError("epsilon must lie in [0, 1]")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigurationError("rho must lie in [0, 1]")
        if self.batch_size < 1 or self.memory_size < self.batch_size:
            raise ConfigurationError("need 1 <= batch_size <= memory_size")

    def initialize(self, obs_dim=40):
        """Fresh networks, empty buffer, reseeded streams. Targets start equal to online nets."""
        self._validate_params()
        init_ss, explore_ss, sample_ss = np.random.SeedSequence(self.random_state).spawn(3)
        dims = (obs_dim, *self.hidden_layer_sizes, 2)
        self.member_seeds_ = [int(s) for s in init_ss.generate_state(self.n_networks)]
        self.online_ = nn.stack([nn.init_mlp(dims, s) for s in self.member_seeds_])
        self.target_ = self.online_.copy()
        self.buffer_ = ReplayBuffer(self.memory_size, obs_dim)
        self.explore_rng_ = np.random.default_rng(explore_ss)
        self.sample_rng_ = np.random.default_rng(sample_ss)
        self.n_decisions_ = 0
        self.n_updates_ = 0
        return self

    # -- acting ------------------------------------------------------------

    def member_votes(self, obs, explore=False):
        """Each member's action: greedy (ties keep), or uniform with probability epsilon."""
        q = nn.forward(self.online_, obs)
        votes = np.argmax(q, axis=-1)
        if explore:
            randomize = self.explore_rng_.random(self.n_networks) < self.epsilon
            random_actions = self.explore_rng_.integers(0, 2, size=self.n_networks)
            votes = np.where(randomize, random_actions, votes)
        return votes

    def act(self, obs, explore=False):
        """Strict-majority vote over members; a tie keeps the current phase."""
        check_is_fitted(self, "online_")
        votes = self.member_votes(np.asarray(obs, dtype=float), explore)
        return int(2 * int(votes.sum()) > self.n_networks)

    def predict(self, X):
        check_is_fitted(self, "online_")
        X = check_array(X, dtype=float)
        votes = np.argmax(nn.forward(self.online_, X), axis=-1)
        return (2 * votes.sum(axis=0) > self.n_networks).astype(int)

    def decision_function(self, X):
        """Ensemble-mean Q-values, shape ``(n_samples, 2)``."""
        check_is_fitted(self, "online_")
        X = check_array(X, dtype=float)
        return nn.forward(self.online_, X).mean(axis=0)

    # -- learning ----------------------------------------------------------

    def record(self, transition: Transition):
        if not (
            math.isfinite(transition.r)
            and np.all(np.isfinite(transition.s))
            and np.all(np.isfinite(transition.s_next))
        ):
            raise DomainError("transitions must be finite")
        if transition.a not in (0, 1):
            raise DomainError(f"action must be 0 or 1, got {transition.a!r}")
        self.buffer_.append(transition)

    def compute_targets(self, rewards, next_obs, subset):
        """Bootstrap targets from the members in ``subset``.

        Each member picks its greedy next action with its online net; its
        target net values that action; the smallest value over the subset is
        discounted and added to the reward.
        """
        members = np.asarray(subset, dtype=np.intp).ravel()
        if members.size == 0:
            raise DomainError("subset must not be empty")
        if len(np.unique(members)) != members.size or members.min() < 0 or members.max() >= self.n_networks:
            raise DomainError(f"subset must hold distinct member indices in [0, {self.n_networks})")
        next_obs = np.atleast_2d(np.asarray(next_obs, dtype=float))
        # every member is evaluated so its value does not depend on the subset drawn
        greedy = np.argmax(nn.forward(self.online_, next_obs), axis=-1)
        q_target = nn.forward(self.target_, next_obs)
        values = np.take_along_axis(q_target, greedy[..., None], axis=-1)[..., 0]
        return np.asarray(rewards, dtype=float) + self.gamma * values[members].min(axis=0)

    def update(self):
        """Run ``utd_ratio`` gradient iterations. Returns None while the buffer is underfilled."""
        if len(self.buffer_) < self.batch_size:
            return None
        losses = []
        for _ in range(self.utd_ratio):
            s, a, r, s_next = self.buffer_.sample(self.batch_size, self.sample_rng_)
            subset = self.sample_rng_.choice(self.n_networks, size=self.n_in_target, replace=False)
            y = self.compute_targets(r, s_next, subset)
            loss = nn.train_step(self.online_, nn.TrainBatch(s, a, y), self.learning_rate, self.clip_norm)
            nn.soft_update(self.target_, self.online_, self.rho)
            losses.append(float(np.mean(loss)))
            self.n_updates_ += 1
        return UpdateStats(losses, self.utd_ratio, self.utd_ratio * self.batch_size)

    def train_episode(self, env, horizon_steps, explore=True, learn=True):
        """Interact for ``horizon_steps`` decisions, learning after each one."""
        check_is_fitted(self, "online_")
        stats = EpisodeStats()
        obs = env.observe()
        trace = env.sim.queue_trace
        for _ in range(horizon_steps):
            action = self.act(obs, explore=explore)
            next_obs, reward = env.step(action)
            self.n_decisions_ += 1
            stats.rewards.append(reward.total)
            stats.actions.append(action)
            stats.decision_queue.append(float(np.mean(trace[-ACTION_INTERVAL:])))
            if learn:
                self.record(Transition(obs, action, reward.total, next_obs))
                upd = self.update()
                if upd is not None:
                    stats.losses.extend(upd.losses)
                    stats.n_updates += upd.n_batches
                    stats.samples_consumed += upd.samples_consumed
            obs = next_obs
        return stats

    def fit(self, env, n_decisions=None):
        """Train online on ``env``; by default until its flow program ends."""
        if n_decisions is None:
            n_decisions = int(env.sim.flow.end // ACTION_INTERVAL)
        self.initialize(env.observation_dim)
        self.episode_stats_ = self.train_episode(env, n_decisions)
        return self

    # -- persistence -------------------------------------------------------

    def save(self, directory):
        """Write a manifest plus one checkpoint per online and target member."""
        check_is_fitted(self, "online_")
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "N": self.n_networks,
            "M": self.n_in_target,
            "G": self.utd_ratio,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "rho": self.rho,
            "seed": self.random_state,
            "step_count": self.n_decisions_,
            "update_count": self.n_updates_,
            "params": {k: list(v) if isinstance(v, tuple) else v for k, v in self.get_params().items()},
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        for i in range(self.n_networks):
            for kind, ens in (("online", self.online_), ("target", self.target_)):
                member = ens.member(i)
                member.seed = self.member_seeds_[i]
                nn.save_checkpoint(member, out / f"{kind}_{i:02d}.json")

    @classmethod
    def load(cls, directory):
        src = Path(directory)
        manifest = json.loads((src / "manifest.json").read_text())
        params = dict(manifest["params"])
        params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
        agent = cls(**params)
        online = [nn.load_checkpoint(src / f"online_{i:02d}.json") for i in range(agent.n_networks)]
        agent.initialize(online[0].dims[0])
        agent.online_ = nn.stack(online)
        agent.target_ = nn.stack(nn.load_checkpoint(src / f"target_{i:02d}.json") for i in range(agent.n_networks))
        agent.n_decisions_ = manifest["step_count"]
        agent.n_updates_ = manifest.get("update_count", 0)
        return agent
