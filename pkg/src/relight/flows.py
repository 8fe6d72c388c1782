"""Traffic demand programs: interval-based flow specs, presets and file IO."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigurationError, FlowParseError

GROUPS = ("WE", "NS")
MODES = ("deterministic", "bernoulli")
APPROACHES = ("N", "S", "E", "W")
GROUP_OF = {"N": "NS", "S": "NS", "E": "WE", "W": "WE"}


@dataclass(frozen=True)
class FlowInterval:
    """Arrivals for one approach group over ``[begin, end)`` seconds.

    ``approach`` pins every arrival to one approach; when unset, arrivals
    alternate between the two approaches of the group.
    """

    begin: float
    end: float
    group: str
    mode: str = "deterministic"
    rate: float = 0.0
    approach: str | None = None

    def __post_init__(self):
        if not self.begin < self.end:
            raise ConfigurationError(f"interval needs begin < end, got [{self.begin}, {self.end})")
        if self.group not in GROUPS:
            raise ConfigurationError(f"unknown approach group {self.group!r}")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown arrival mode {self.mode!r}")
        if not (math.isfinite(self.rate) and self.rate >= 0):
            raise ConfigurationError(f"rate must be finite and >= 0, got {self.rate}")
        if self.approach is not None and GROUP_OF.get(self.approach) != self.group:
            raise ConfigurationError(f"approach {self.approach!r} is not in group {self.group}")

    def to_dict(self):
        d = asdict(self)
        if d["approach"] is None:
            del d["approach"]
        return d


@dataclass(frozen=True)
class FlowSpec:
    intervals: tuple[FlowInterval, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(self.intervals))

    @property
    def end(self):
        """Time at which the last interval closes (0 for an empty spec)."""
        return max((iv.end for iv in self.intervals), default=0.0)

    def scaled(self, factor):
        """Stretch interval bounds by ``factor`` while keeping rates."""
        if not factor > 0:
            raise ConfigurationError(f"scale must be > 0, got {factor}")
        return FlowSpec(
            FlowInterval(
                round(iv.begin * factor, 6), round(iv.end * factor, 6), iv.group, iv.mode, iv.rate, iv.approach
            )
            for iv in self.intervals
        )

    def shifted(self, offset):
        return FlowSpec(
            FlowInterval(iv.begin + offset, iv.end + offset, iv.group, iv.mode, iv.rate, iv.approach)
            for iv in self.intervals
        )

    def to_dict(self):
        return {"intervals": [iv.to_dict() for iv in self.intervals]}

    @classmethod
    def from_dict(cls, data):
        try:
            rows = data["intervals"]
            return cls(FlowInterval(**row) for row in rows)
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed flow document: {exc}") from exc

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _group_pair(rate_we, rate_ns, begin, end):
    return [
        FlowInterval(begin, end, "WE", "deterministic", rate_we),
        FlowInterval(begin, end, "NS", "deterministic", rate_ns),
    ]


# Car counts over the window, converted to rates (count / duration).
_SWITCH = FlowSpec(
    [
        FlowInterval(0, 36000, "WE", "deterministic", 14400 / 36000),
        FlowInterval(36000, 72000, "NS", "deterministic", 14400 / 36000),
    ]
)
_EQUAL = FlowSpec(_group_pair(2400 / 72000, 2400 / 72000, 0, 72000))
_UNEQUAL = FlowSpec(_group_pair(14400 / 72000, 2400 / 72000, 0, 72000))
_SYNTHETIC = FlowSpec(
    _SWITCH.intervals + _EQUAL.shifted(72000).intervals + _UNEQUAL.shifted(144000).intervals
)

SYNTHETIC_PRESETS = {
    "switch": _SWITCH,
    "equal": _EQUAL,
    "unequal": _UNEQUAL,
    "synthetic": _SYNTHETIC,
}

HANGZHOU_RATE = 0.514
HANGZHOU_HORIZON = 3600.0


def hangzhou_like():
    """Bernoulli arrivals at the Hangzhou aggregate rate, split evenly over both groups."""
    half = HANGZHOU_RATE / 2
    return FlowSpec(
        [
            FlowInterval(0, HANGZHOU_HORIZON, "WE", "bernoulli", half),
            FlowInterval(0, HANGZHOU_HORIZON, "NS", "bernoulli", half),
        ]
    )


PRESET_NAMES = tuple(SYNTHETIC_PRESETS) + ("hangzhou",)


def preset(name, scale=1.0):
    """Return a named flow. ``scale`` shrinks the synthetic presets' horizons.

    The hangzhou preset is already one hour long and is never rescaled.
    """
    if name == "hangzhou":
        return hangzhou_like()
    try:
        spec = SYNTHETIC_PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}"
        ) from None
    return spec if scale == 1.0 else spec.scaled(scale)


def ingest_real_arrivals(path):
    """Turn a ``t,approach`` CSV (one row per vehicle) into a replaying FlowSpec.

    Each distinct (second, approach) pair becomes a one-second deterministic
    interval whose rate is the number of vehicles in that second, so the
    simulator spawns exactly the recorded vehicles at the recorded times.
    """
    counts = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return FlowSpec()
        if [h.strip() for h in header] != ["t", "approach"]:
            raise FlowParseError(f"expected header 't,approach', got {','.join(header)!r}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise FlowParseError(f"expected 2 fields, got {len(row)}", lineno)
            raw_t, approach = row[0].strip(), row[1].strip()
            try:
                t = float(raw_t)
            except ValueError:
                raise FlowParseError(f"bad time {raw_t!r}", lineno) from None
            if not math.isfinite(t) or t < 0 or t != int(t):
                raise FlowParseError(f"time must be a whole number of seconds >= 0, got {raw_t!r}", lineno)
            if approach not in APPROACHES:
                raise FlowParseError(f"bad approach {approach!r}", lineno)
            key = (int(t), approach)
            counts[key] = counts.get(key, 0) + 1
    return FlowSpec(
        FlowInterval(t, t + 1, GROUP_OF[a], "deterministic", float(k), a)
        for (t, a), k in sorted(counts.items(), key=lambda kv: (kv[0][0], APPROACHES.index(kv[0][1])))
    )
