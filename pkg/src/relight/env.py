"""MDP adapter over the simulator: observations, 5 s decisions, six-term reward."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigurationError, DomainError
from .sim import Phase, Simulator

ACTION_INTERVAL = 5
KEEP, SWITCH = 0, 1


@dataclass(frozen=True)
class RewardWeights:
    """Weights on (variance, delay, waiting, switch, throughput, travel time).

    The positive travel-time weight rewards exits with long travel times. It is
    kept as published; override ``w6`` to change it.
    """

    w1: float = -0.25
    w2: float = -0.25
    w3: float = -0.25
    w4: float = -5.0
    w5: float = 1.0
    w6: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ConfigurationError(f"reward weight {f.name} must be finite")

    def as_array(self):
        return np.array([self.w1, self.w2, self.w3, self.w4, self.w5, self.w6])

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc


@dataclass(frozen=True)
class RewardBreakdown:
    V: float
    sum_delay: float
    sum_wait: float
    C: int
    N: int
    T: float
    total: float

    def components(self):
        return np.array([self.V, self.sum_delay, self.sum_wait, self.C, self.N, self.T], dtype=float)


def queue_variance(lengths):
    """Population variance of per-lane queue lengths."""
    lengths = np.asarray(lengths, dtype=float)
    if lengths.size == 0:
        raise DomainError("queue_variance needs at least one lane")
    return float(np.mean((lengths - lengths.mean()) ** 2))


def reward_from(snapshot, switched, weights):
    V = queue_variance(snapshot.queue_lengths)
    parts = (
        V,
        float(snapshot.delays.sum()),
        float(snapshot.wait_minutes.sum()),
        int(bool(switched)),
        int(snapshot.departures),
        float(snapshot.travel_time_minutes),
    )
    total = sum(w * p for w, p in zip(weights.as_array().tolist(), parts))
    return RewardBreakdown(*parts, total=total)


def _one_hot(phase):
    v = np.zeros(2)
    v[int(phase)] = 1.0
    return v


def observation_dim(n_lanes=12):
    return 3 * n_lanes + 4


def observe(sim: Simulator):
    """Flat vector ``[l_0..l_k, w_0..w_k, n_0..n_k, p_c(2), p_n(2)]``."""
    snap = sim.snapshot(consume=False)
    return np.concatenate(
        [snap.queue_lengths, snap.wait_minutes, snap.queue_counts, _one_hot(snap.phase), _one_hot(snap.next_phase)]
    )


def env_step(sim: Simulator, action, weights=None):
    """Apply ``action`` for one decision interval and score the outcome.

    A switch spends the first 3 s of the interval in yellow and the rest in
    the new phase. State terms come from the end of the interval, throughput
    terms from departures during it.
    """
    weights = weights if weights is not None else RewardWeights()
    switched = bool(action)
    sim.command_signal(switched)
    for _ in range(ACTION_INTERVAL):
        sim.advance_tick()
    snap = sim.snapshot()
    return observe(sim), reward_from(snap, switched, weights)


class TrafficEnv:
    """Binds a simulator to reward weights; the object agents and controllers drive."""

    def __init__(self, sim: Simulator, weights=None):
        self.sim = sim
        self.weights = weights if weights is not None else RewardWeights()
        # discard departures that happened before the env took over
        sim.snapshot()

    @property
    def observation_dim(self):
        return observation_dim(self.sim.config.n_lanes)

    @property
    def phase(self) -> Phase:
        return self.sim.phase

    @property
    def time_in_phase(self):
        return self.sim.signal.time_in_phase

    def observe(self):
        return observe(self.sim)

    def step(self, action):
        return env_step(self.sim, action, self.weights)
