"""Classical controllers: fixed cycle and self-organizing traffic lights (SOTL)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import ACTION_INTERVAL, KEEP, SWITCH
from .errors import ConfigurationError
from .sim import Phase


@dataclass
class FixedCycleController:
    """Switch once the current phase has been green for its configured duration.

    ``green_duration`` is one number for both phases or a ``(WEG, NSG)`` pair.
    """

    green_duration: float | tuple = 30.0

    def __post_init__(self):
        d = self.green_duration
        pair = tuple(d) if isinstance(d, (tuple, list)) else (d, d)
        if len(pair) != 2 or min(pair) < ACTION_INTERVAL:
            raise ConfigurationError(f"green durations must be >= {ACTION_INTERVAL} s, got {d!r}")
        self.durations = tuple(float(x) for x in pair)

    def act(self, time_in_phase, phase=Phase.WEG):
        return SWITCH if time_in_phase >= self.durations[int(phase)] else KEEP

    def reset(self):
        pass

    def decide(self, env, obs):
        return self.act(env.time_in_phase, env.phase)


def _lane_groups(n_lanes):
    per = n_lanes // 4
    ns = np.arange(0, 2 * per)
    we = np.arange(2 * per, 4 * per)
    return we, ns


def green_red_demand(obs, n_lanes=12):
    """Queued vehicles on the green and the red approaches, read from an observation."""
    obs = np.asarray(obs, dtype=float)
    queues = obs[:n_lanes]
    we, ns = _lane_groups(n_lanes)
    current = Phase(int(np.argmax(obs[3 * n_lanes:3 * n_lanes + 2])))
    green, red = (we, ns) if current is Phase.WEG else (ns, we)
    return float(queues[green].sum()), float(queues[red].sum())


@dataclass
class SotlController:
    """Integrates red-side demand and switches once it passes ``theta``.

    A switch also needs ``phi_min`` seconds of green and at most ``mu``
    vehicles still queued on the green approaches.
    """

    theta: float = 50.0
    phi_min: float = 10.0
    mu: float = 3.0
    interval: float = ACTION_INTERVAL

    def __post_init__(self):
        if min(self.theta, self.phi_min, self.mu, self.interval) <= 0:
            raise ConfigurationError("SOTL parameters must be positive")
        self.accumulator = 0.0

    def act(self, obs, time_in_phase, accumulator, n_lanes=12):
        if accumulator < 0:
            raise ConfigurationError("accumulator must be >= 0")
        green, red = green_red_demand(obs, n_lanes)
        accumulator += red * self.interval
        if accumulator >= self.theta and time_in_phase >= self.phi_min and green <= self.mu:
            return SWITCH, 0.0
        return KEEP, accumulator

    def reset(self):
        self.accumulator = 0.0

    def decide(self, env, obs):
        action, self.accumulator = self.act(obs, env.time_in_phase, self.accumulator, env.sim.config.n_lanes)
        return action
