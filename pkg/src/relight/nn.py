"""Small ReLU Q-networks with hand-written backprop.

Parameters may carry a leading ensemble axis: weights of shape
``(n_members, fan_in, fan_out)`` train all members in one batched pass while
sharing the exact code path of a single network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError

DEFAULT_DIMS = (40, 32, 32, 2)
CLIP_NORM = 10.0
CHECKPOINT_FORMAT = "relight-mlp/1"


@dataclass
class MLP:
    weights: list
    biases: list
    dims: tuple
    seed: int | None = None

    @property
    def n_members(self):
        """Ensemble size, or None for a plain network."""
        return self.weights[0].shape[0] if self.weights[0].ndim == 3 else None

    def member(self, i):
        """View of ensemble member ``i``; in-place updates write through."""
        if self.n_members is None:
            raise DomainError("not an ensemble")
        return MLP([w[i] for w in self.weights], [b[i] for b in self.biases], self.dims, None)

    def copy(self):
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.dims, self.seed)

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self):
        return np.concatenate([p.ravel() for p in self.parameters()])


@dataclass
class TrainBatch:
    inputs: np.ndarray
    action_indices: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.action_indices = np.asarray(self.action_indices, dtype=np.intp).ravel()
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        n = len(self.inputs)
        if len(self.action_indices) != n or len(self.targets) != n:
            raise DomainError("inputs, action_indices and targets must have equal length")


def _check_dims(dims):
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ConfigurationError(f"layer dims must be >= 2 positive sizes, got {dims}")
    return dims


def init_mlp(dims=DEFAULT_DIMS, seed=0):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    dims = _check_dims(dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MLP(weights, biases, dims, seed)


def stack(nets):
    """Combine equal-architecture networks into one ensemble MLP (copies)."""
    nets = list(nets)
    if not nets:
        raise DomainError("cannot stack zero networks")
    dims = nets[0].dims
    if any(n.dims != dims or n.n_members is not None for n in nets):
        raise DomainError("stack needs plain networks of one architecture")
    weights = [np.stack([n.weights[k] for n in nets]) for k in range(len(dims) - 1)]
    biases = [np.stack([n.biases[k] for n in nets]) for k in range(len(dims) - 1)]
    return MLP(weights, biases, dims, None)


def _add_bias(z, b):
    if z.ndim > b.ndim:
        b = b.reshape(b.shape[:-1] + (1,) * (z.ndim - b.ndim) + b.shape[-1:])
    return z + b


def _forward_cache(net, x):
    zs, acts = [], [x]
    a = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = _add_bias(a @ w, b)
        zs.append(z)
        a = z if k == last else np.maximum(z, 0.0)
        acts.append(a)
    return zs, acts


def forward(net, obs):
    """Q-values. ``obs`` is ``(in,)`` or ``(batch, in)``; ensembles prepend a member axis."""
    x = np.asarray(obs, dtype=float)
    if x.ndim not in (1, 2) or x.shape[-1] != net.dims[0]:
        raise DomainError(f"expected observations of length {net.dims[0]}, got shape {x.shape}")
    return _forward_cache(net, x)[1][-1]


def loss_and_grads(net, batch: TrainBatch):
    """Mean squared error on the taken action's output, and its gradients.

    Returns ``(loss, grads)`` with grads ordered like ``net.parameters()``.
    """
    x = batch.inputs
    if x.shape[-1] != net.dims[0]:
        raise DomainError(f"expected observations of length {net.dims[0]}, got {x.shape[-1]}")
    if not np.all(np.isfinite(batch.targets)):
        raise DomainError("targets must be finite")
    n = len(x)
    rows = np.arange(n)
    zs, acts = _forward_cache(net, x)
    q = acts[-1]
    err = q[..., rows, batch.action_indices] - batch.targets
    loss = np.mean(err**2, axis=-1)

    dz = np.zeros_like(q)
    dz[..., rows, batch.action_indices] = 2.0 * err / n
    grads = []
    for k in range(len(net.weights) - 1, -1, -1):
        a_prev = acts[k]
        grads.append(dz.sum(axis=-2))
        grads.append(np.swapaxes(a_prev, -1, -2) @ dz)
        if k:
            dz = (dz @ np.swapaxes(net.weights[k], -1, -2)) * (zs[k - 1] > 0)
    grads.reverse()
    return loss, grads


def clip_by_global_norm(grads, max_norm, ensemble=False):
    """Rescale so each network's gradient norm is at most ``max_norm``."""
    if ensemble:
        sq = sum((g**2).reshape(g.shape[0], -1).sum(axis=1) for g in grads)
    else:
        sq = sum(float((g**2).sum()) for g in grads)
    norm = np.sqrt(sq)
    scale = np.minimum(1.0, max_norm / np.maximum(norm, 1e-12))
    if ensemble:
        return [g * scale.reshape((-1,) + (1,) * (g.ndim - 1)) for g in grads]
    return [g * scale for g in grads]


def train_step(net, batch: TrainBatch, lr=0.01, clip_norm=CLIP_NORM):
    """One SGD step in place. Returns the loss before the step (per member for ensembles)."""
    loss, grads = loss_and_grads(net, batch)
    if lr:
        grads = clip_by_global_norm(grads, clip_norm, ensemble=net.n_members is not None)
        for p, g in zip(net.parameters(), grads):
            p -= lr * g
    return loss


def soft_update(target, online, rho=0.995):
    """Polyak blend in place: ``target <- rho * target + (1 - rho) * online``."""
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho must lie in [0, 1], got {rho}")
    tp, op = target.parameters(), online.parameters()
    if target.dims != online.dims or any(a.shape != b.shape for a, b in zip(tp, op)):
        raise DomainError("soft_update needs matching architectures")
    for t, o in zip(tp, op):
        t *= rho
        t += (1.0 - rho) * o


def to_dict(net):
    return {
        "format": CHECKPOINT_FORMAT,
        "dims": list(net.dims),
        "seed": net.seed,
        "members": net.n_members,
        "layers": [{"weight": w.tolist(), "bias": b.tolist()} for w, b in zip(net.weights, net.biases)],
    }


def from_dict(data):
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"unsupported checkpoint format {data.get('format')!r}")
    dims = _check_dims(data["dims"])
    weights = [np.array(layer["weight"], dtype=float) for layer in data["layers"]]
    biases = [np.array(layer["bias"], dtype=float) for layer in data["layers"]]
    net = MLP(weights, biases, dims, data.get("seed"))
    if net.n_members != data.get("members"):
        raise ConfigurationError("checkpoint member count does not match its layers")
    return net


def save_checkpoint(net, path):
    Path(path).write_text(json.dumps(to_dict(net)))


def load_checkpoint(path):
    return from_dict(json.loads(Path(path).read_text()))
