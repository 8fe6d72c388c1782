"""Deterministic single-intersection microsimulator (point-queue model).

Vehicles spawn at the upstream end of an entry lane, travel at free-flow
speed to the stop line and wait there in a FIFO queue. Under green (and not
yellow) each lane releases its head vehicle once it has accumulated one
saturation headway of green service time.

Tick order: discharge (queues as they stood at the start of the tick),
spawn at the tick's start time, move, then signal bookkeeping.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ConfigurationError, SignalInProgressError
from .flows import APPROACHES, FlowSpec

YELLOW_SECONDS = 3.0
TICK_SECONDS = 1.0


class Phase(IntEnum):
    WEG = 0
    NSG = 1

    @property
    def other(self):
        return Phase(1 - self)

    @property
    def green_approaches(self):
        return ("E", "W") if self is Phase.WEG else ("N", "S")


@dataclass(frozen=True)
class SimConfig:
    road_length: float = 150.0
    lanes_per_approach: int = 3
    free_flow_speed: float = 13.89
    saturation_headway: float = 2.0
    yellow_duration: float = YELLOW_SECONDS
    tick: float = TICK_SECONDS

    def __post_init__(self):
        for name in ("road_length", "free_flow_speed", "saturation_headway", "yellow_duration", "tick"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be a positive finite number, got {value!r}")
        if not (isinstance(self.lanes_per_approach, int) and self.lanes_per_approach > 0):
            raise ConfigurationError(f"lanes_per_approach must be a positive int, got {self.lanes_per_approach!r}")
        if self.yellow_duration != YELLOW_SECONDS:
            raise ConfigurationError(f"yellow_duration is fixed at {YELLOW_SECONDS} s")
        if self.tick != TICK_SECONDS:
            raise ConfigurationError(f"tick is fixed at {TICK_SECONDS} s")

    @property
    def n_lanes(self):
        return 4 * self.lanes_per_approach

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc


@dataclass
class PhaseState:
    phase: Phase = Phase.WEG
    in_yellow: bool = False
    time_in_phase: float = 0.0
    yellow_elapsed: float = 0.0


@dataclass
class Vehicle:
    id: int
    approach: str
    lane_index: int
    spawn_time: float
    position: float = 0.0
    queued_since: float | None = None
    exit_time: float | None = None

    @property
    def travel_time(self):
        return None if self.exit_time is None else self.exit_time - self.spawn_time


@dataclass
class Lane:
    approach: str
    index: int
    queue: deque = field(default_factory=deque)
    approaching: list = field(default_factory=list)
    service: float = 0.0

    @property
    def occupancy(self):
        return len(self.queue) + len(self.approaching)


@dataclass(frozen=True)
class TrafficSnapshot:
    """Per-lane aggregates plus departures since the previous consuming snapshot.

    Lane arrays follow approach order N, S, E, W, lanes ascending within an
    approach. Waiting and travel times are in minutes.
    """

    t: float
    queue_lengths: np.ndarray
    queue_counts: np.ndarray
    wait_minutes: np.ndarray
    delays: np.ndarray
    departures: int
    travel_time_minutes: float
    phase: Phase
    next_phase: Phase
    in_yellow: bool
    time_in_phase: float


class Simulator:
    """One intersection. Use :func:`reset` or construct directly."""

    def __init__(self, config=None, flow=None, seed=0):
        self.config = config if config is not None else SimConfig()
        if not isinstance(self.config, SimConfig):
            raise ConfigurationError("config must be a SimConfig")
        self.flow = flow if flow is not None else FlowSpec()
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        lpa = self.config.lanes_per_approach
        self.lanes = [Lane(a, i) for a in APPROACHES for i in range(lpa)]
        self._lanes_by_approach = {a: self.lanes[k * lpa:(k + 1) * lpa] for k, a in enumerate(APPROACHES)}
        self.vehicles: dict[int, Vehicle] = {}
        self.departed: list[int] = []
        self.signal = PhaseState()
        self.t = 0.0
        self._next_id = 0
        self._mark = 0
        self._alternate = {"WE": 0, "NS": 0}
        self.queue_trace: list[int] = []
        self.delay_trace: list[float] = []

    # -- views -------------------------------------------------------------

    @property
    def phase(self):
        return self.signal.phase

    @property
    def n_spawned(self):
        return self._next_id

    @property
    def n_in_network(self):
        return self._next_id - len(self.departed)

    def green(self, approach):
        return not self.signal.in_yellow and approach in self.signal.phase.green_approaches

    # -- dynamics ----------------------------------------------------------

    def command_signal(self, switch):
        if self.signal.in_yellow:
            raise SignalInProgressError("a phase change is already in progress")
        if switch:
            self.signal.in_yellow = True
            self.signal.yellow_elapsed = 0.0

    def advance_tick(self):
        cfg = self.config
        t0, t1 = self.t, self.t + cfg.tick

        for lane in self.lanes:
            if lane.queue and self.green(lane.approach):
                lane.service += cfg.tick
                if lane.service >= cfg.saturation_headway - 1e-9:
                    vid = lane.queue.popleft()
                    self.vehicles[vid].exit_time = t1
                    self.departed.append(vid)
                    lane.service -= cfg.saturation_headway
                    if not lane.queue:
                        lane.service = 0.0
            else:
                lane.service = 0.0

        self._spawn(t0, t1)

        step = cfg.free_flow_speed * cfg.tick
        for lane in self.lanes:
            if not lane.approaching:
                continue
            still_moving = []
            for vid in lane.approaching:
                v = self.vehicles[vid]
                v.position = min(v.position + step, cfg.road_length)
                if v.position >= cfg.road_length:
                    v.queued_since = t1
                    lane.queue.append(vid)
                else:
                    still_moving.append(vid)
            lane.approaching = still_moving

        sig = self.signal
        sig.time_in_phase += cfg.tick
        if sig.in_yellow:
            sig.yellow_elapsed += cfg.tick
            if sig.yellow_elapsed >= cfg.yellow_duration - 1e-9:
                sig.phase = sig.phase.other
                sig.in_yellow = False
                sig.yellow_elapsed = 0.0
                sig.time_in_phase = 0.0

        self.t = t1
        queued = sum(len(lane.queue) for lane in self.lanes)
        self.queue_trace.append(queued)
        self.delay_trace.append(float(self._delays().mean()))

    def run(self, seconds):
        for _ in range(int(round(seconds / self.config.tick))):
            self.advance_tick()

    def _spawn(self, t0, t1):
        for iv in self.flow.intervals:
            if not (iv.begin <= t0 < iv.end):
                continue
            if iv.mode == "deterministic":
                before = math.floor(iv.rate * max(0.0, t0 - iv.begin) + 1e-9)
                after = math.floor(iv.rate * (min(t1, iv.end) - iv.begin) + 1e-9)
                count = after - before
            else:
                count = int(self._rng.random() < min(iv.rate, 1.0))
            for _ in range(count):
                if iv.approach is not None:
                    approach = iv.approach
                else:
                    pair = ("E", "W") if iv.group == "WE" else ("N", "S")
                    approach = pair[self._alternate[iv.group] % 2]
                    self._alternate[iv.group] += 1
                self._add_vehicle(approach, t0)

    def _add_vehicle(self, approach, t):
        lane = min(self._lanes_by_approach[approach], key=lambda ln: (ln.occupancy, ln.index))
        vid = self._next_id
        self._next_id += 1
        self.vehicles[vid] = Vehicle(vid, approach, lane.index, spawn_time=t)
        lane.approaching.append(vid)
        return vid

    # -- observation -------------------------------------------------------

    def _delays(self):
        # moving vehicles run at free-flow speed, queued ones are stopped
        return np.array(
            [len(lane.queue) / lane.occupancy if lane.occupancy else 0.0 for lane in self.lanes]
        )

    def snapshot(self, consume=True):
        """Aggregate lane state; departures are those since the last consuming call."""
        t = self.t
        lengths = np.array([len(lane.queue) for lane in self.lanes], dtype=float)
        waits = np.array(
            [sum(t - self.vehicles[vid].queued_since for vid in lane.queue) / 60.0 for lane in self.lanes]
        )
        new = self.departed[self._mark:]
        if consume:
            self._mark = len(self.departed)
        travel = sum(self.vehicles[vid].travel_time for vid in new) / 60.0
        sig = self.signal
        return TrafficSnapshot(
            t=t,
            queue_lengths=lengths,
            queue_counts=lengths.copy(),
            wait_minutes=waits,
            delays=self._delays(),
            departures=len(new),
            travel_time_minutes=travel,
            phase=sig.phase,
            next_phase=sig.phase.other,
            in_yellow=sig.in_yellow,
            time_in_phase=sig.time_in_phase,
        )


def reset(config=None, flow=None, seed=0):
    """Fresh simulator: empty network, phase WEG, t = 0."""
    return Simulator(config, flow, seed)
