"""Experiment orchestration: configs, runs, sweeps, metrics, CSV and SVG output."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .agent import RELightAgent
from .baselines import FixedCycleController, SotlController
from .env import ACTION_INTERVAL, RewardWeights, TrafficEnv
from .errors import ConfigurationError, DomainError
from .flows import FlowSpec, ingest_real_arrivals, preset
from .sim import SimConfig, Simulator

CONTROLLERS = ("relight", "single-dqn", "fixed", "sotl")
METRIC_FIELDS = ("seed", "controller", "avg_queue_length", "avg_delay", "avg_travel_time")
SWEEP_PARAMS = {"utd": "utd_ratio", "n": "n_networks", "m": "n_in_target"}
SEED_ENV = "RELIGHT_SEED"


@dataclass
class ExperimentConfig:
    """One experiment: a flow source, a controller and the seeds to run it under.

    ``flow`` holds exactly one of ``preset``, ``path`` (flow JSON) or
    ``arrivals_csv``. ``metrics_from`` is the fraction of the horizon after
    which metrics are collected (0.75 gives final-quarter metrics).
    """

    flow: dict = field(default_factory=lambda: {"preset": "equal"})
    controller: str = "relight"
    controller_params: dict = field(default_factory=dict)
    horizon: float | None = None
    seeds: list = field(default_factory=lambda: [0])
    scale: float = 0.05
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    sim: SimConfig = field(default_factory=SimConfig)
    metrics_from: float = 0.0
    evaluate: bool = False
    curve_window: int = 60
    output: str | None = None

    def __post_init__(self):
        if isinstance(self.flow, str):
            self.flow = {"preset": self.flow}
        if len(self.flow) != 1 or next(iter(self.flow)) not in ("preset", "path", "arrivals_csv"):
            raise ConfigurationError("flow needs exactly one of preset, path, arrivals_csv")
        if self.controller not in CONTROLLERS:
            raise ConfigurationError(f"unknown controller {self.controller!r}; choose from {CONTROLLERS}")
        if self.horizon is not None and not self.horizon > 0:
            raise ConfigurationError("horizon must be > 0")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        self.seeds = [int(s) for s in self.seeds]
        if not 0.0 <= self.metrics_from < 1.0:
            raise ConfigurationError("metrics_from must lie in [0, 1)")
        if not self.scale > 0:
            raise ConfigurationError("scale must be > 0")

    @classmethod
    def from_dict(cls, data, base_dir=None):
        data = dict(data)
        ctrl = data.pop("controller", {"name": "relight"})
        if isinstance(ctrl, str):
            ctrl = {"name": ctrl}
        ctrl = dict(ctrl)
        kwargs = {"controller": ctrl.pop("name", "relight"), "controller_params": ctrl}
        if "reward_weights" in data:
            kwargs["reward_weights"] = RewardWeights.from_dict(data.pop("reward_weights"))
        if "sim" in data:
            kwargs["sim"] = SimConfig.from_dict(data.pop("sim"))
        flow = data.pop("flow", {"preset": "equal"})
        if isinstance(flow, dict) and base_dir is not None:
            flow = {k: (str(Path(base_dir) / v) if k != "preset" else v) for k, v in flow.items()}
        try:
            return cls(flow=flow, **kwargs, **data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def to_dict(self):
        d = asdict(self)
        d["controller"] = {"name": d.pop("controller"), **d.pop("controller_params")}
        return d

    def resolve_flow(self):
        (kind, value), = self.flow.items()
        if kind == "preset":
            return preset(value, self.scale)
        if kind == "path":
            return FlowSpec.load(value)
        return ingest_real_arrivals(value)

    def resolve_horizon(self, flow):
        horizon = self.horizon if self.horizon is not None else flow.end
        if horizon <= 0:
            raise ConfigurationError("horizon resolves to 0; set it explicitly for an empty flow")
        return float(horizon)


@dataclass(frozen=True)
class MetricsRecord:
    seed: int
    controller: str
    avg_queue_length: float
    avg_delay: float
    avg_travel_time: float


@dataclass
class RunResult:
    record: MetricsRecord
    curve: list
    eval_record: MetricsRecord | None = None


def rolling_mean(values, window):
    """Trailing mean; the first entries average over what is available."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return x
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def compute_metrics(sim, seed, controller, start=0.0):
    """Metrics over ``[start, sim.t]``.

    Queue length and delay average the per-second samples in the window.
    Travel time covers vehicles that exited inside the window; vehicles still
    in the network count as censored, with ``sim.t - spawn_time``.
    """
    first = int(np.ceil(start))
    queue = sim.queue_trace[first:]
    delay = sim.delay_trace[first:]
    times = []
    for v in sim.vehicles.values():
        if v.exit_time is None:
            times.append(sim.t - v.spawn_time)
        elif v.exit_time > start:
            times.append(v.exit_time - v.spawn_time)
    return MetricsRecord(
        seed=seed,
        controller=controller,
        avg_queue_length=float(np.mean(queue)) if queue else 0.0,
        avg_delay=float(np.mean(delay)) if delay else 0.0,
        avg_travel_time=float(np.mean(times)) if times else 0.0,
    )


def build_controller(name, params, random_state):
    if name == "relight":
        return RELightAgent(**params, random_state=random_state)
    if name == "single-dqn":
        merged = {"n_networks": 1, "n_in_target": 1, "utd_ratio": 1, **params}
        return RELightAgent(**merged, random_state=random_state)
    if name == "fixed":
        return FixedCycleController(**params)
    return SotlController(**params)


def _seeds_for(seed):
    sim_ss, agent_ss = np.random.SeedSequence(seed).spawn(2)
    return int(sim_ss.generate_state(1)[0]), int(agent_ss.generate_state(1)[0])


def _drive(controller, env, n_decisions):
    controller.reset()
    obs = env.observe()
    trace = env.sim.queue_trace
    curve = []
    for _ in range(n_decisions):
        obs, _ = env.step(controller.decide(env, obs))
        curve.append(float(np.mean(trace[-ACTION_INTERVAL:])))
    return curve


def run_single(config: ExperimentConfig, seed, flow=None):
    """Run one seed. RELight learns online throughout the episode."""
    flow = flow if flow is not None else config.resolve_flow()
    horizon = config.resolve_horizon(flow)
    n_decisions = int(horizon // ACTION_INTERVAL)
    sim_seed, agent_seed = _seeds_for(seed)
    sim = Simulator(config.sim, flow, sim_seed)
    env = TrafficEnv(sim, config.reward_weights)
    controller = build_controller(config.controller, config.controller_params, agent_seed)
    eval_record = None
    if isinstance(controller, RELightAgent):
        controller.initialize(env.observation_dim)
        curve = controller.train_episode(env, n_decisions).decision_queue
        if config.evaluate:
            eval_sim = Simulator(config.sim, flow, sim_seed)
            controller.train_episode(TrafficEnv(eval_sim, config.reward_weights), n_decisions, explore=False, learn=False)
            eval_record = compute_metrics(eval_sim, seed, config.controller + "-eval", horizon * config.metrics_from)
    else:
        curve = _drive(controller, env, n_decisions)
    record = compute_metrics(sim, seed, config.controller, horizon * config.metrics_from)
    return RunResult(record, curve, eval_record)


def _seed_override(config):
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return config
    try:
        return replace(config, seeds=[int(raw)])
    except ValueError:
        raise ConfigurationError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _run_all(config, n_jobs):
    flow = config.resolve_flow()
    return Parallel(n_jobs=n_jobs)(delayed(run_single)(config, s, flow) for s in config.seeds)


def metrics_csv(records):
    """CSV text, rows sorted by (controller, seed)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_FIELDS)
    for r in sorted(records, key=lambda r: (r.controller, r.seed)):
        writer.writerow([r.seed, r.controller, repr(r.avg_queue_length), repr(r.avg_delay), repr(r.avg_travel_time)])
    return buf.getvalue()


def _write_manifest(out, config, extra=None):
    manifest = {"config": config.to_dict(), "seeds": config.seeds}
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run_experiment(config: ExperimentConfig, out_dir=None, n_jobs=1):
    """Run every seed; write ``metrics.csv`` and ``manifest.json`` when an output dir is given."""
    config = _seed_override(config)
    results = _run_all(config, n_jobs)
    records = [r.record for r in results] + [r.eval_record for r in results if r.eval_record]
    out_dir = out_dir if out_dir is not None else config.output
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(metrics_csv(records))
        _write_manifest(out, config)
    return sorted(records, key=lambda r: (r.controller, r.seed))


@dataclass
class SweepResult:
    param: str
    rows: list
    curves: dict

    def summary(self):
        """Per value: median over seeds of each metric."""
        out = {}
        for value in dict.fromkeys(v for v, _ in self.rows):
            recs = [r for v, r in self.rows if v == value]
            out[value] = {
                k: float(np.median([getattr(r, k) for r in recs]))
                for k in ("avg_queue_length", "avg_delay", "avg_travel_time")
            }
        return out


def _sweep_configs(param, values, base: ExperimentConfig):
    if param not in SWEEP_PARAMS:
        raise ConfigurationError(f"sweep parameter must be one of {sorted(SWEEP_PARAMS)}, got {param!r}")
    if base.controller not in ("relight", "single-dqn"):
        raise ConfigurationError("sweeps vary RELight parameters; base controller must be relight")
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    configs = []
    for value in values:
        params = {**base.controller_params, SWEEP_PARAMS[param]: int(value)}
        probe = build_controller(base.controller, params, 0)
        probe._validate_params()
        configs.append((int(value), replace(base, controller_params=params)))
    return configs


def run_sweep(param, values, base: ExperimentConfig, out_dir=None, n_jobs=1):
    """One experiment per value and seed, plus learning curves and a summary table."""
    base = _seed_override(base)
    configs = _sweep_configs(param, values, base)
    flow = base.resolve_flow()
    jobs = [(v, cfg, s) for v, cfg in configs for s in cfg.seeds]
    results = Parallel(n_jobs=n_jobs)(delayed(run_single)(cfg, s, flow) for _, cfg, s in jobs)
    rows, curves = [], {}
    for (value, _, seed), res in zip(jobs, results):
        rows.append((value, res.record))
        curves[(value, seed)] = rolling_mean(res.curve, base.curve_window)
    result = SweepResult(param, rows, curves)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_sweep_files(out, result, base)
    return result


def _write_sweep_files(out, result, base):
    param = result.param
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["param", "value", *METRIC_FIELDS])
    for value, r in sorted(result.rows, key=lambda vr: (vr[0], vr[1].seed)):
        w.writerow([param, value, r.seed, r.controller, repr(r.avg_queue_length), repr(r.avg_delay), repr(r.avg_travel_time)])
    (out / f"sweep_{param}.csv").write_text(buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["param", "value", "seed", "decision", "rolling_queue_length"])
    for (value, seed), curve in sorted(result.curves.items()):
        for i, q in enumerate(curve):
            w.writerow([param, value, seed, i, repr(float(q))])
    (out / f"curves_{param}.csv").write_text(buf.getvalue())

    by_value = {}
    for (value, _), curve in sorted(result.curves.items()):
        by_value.setdefault(value, []).append(curve)
    mean_curves = {f"{param}={v}": np.mean(cs, axis=0) for v, cs in by_value.items()}
    emit_plots(mean_curves, out / f"curves_{param}.svg", title=f"rolling queue length vs decision ({param})")

    lines = ["value,avg_queue_length,avg_delay,avg_travel_time"]
    for value, m in result.summary().items():
        lines.append(f"{value},{m['avg_queue_length']!r},{m['avg_delay']!r},{m['avg_travel_time']!r}")
    (out / f"summary_{param}.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(out, base, {"sweep": {"param": param, "values": sorted(by_value)}})


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def emit_plots(curves, path, title="", width=640, height=400):
    """Write a line chart with one polyline per labelled curve. Output bytes depend only on the input."""
    if not curves or any(len(c) == 0 for c in curves.values()):
        raise DomainError("emit_plots needs at least one non-empty curve")
    pad = 50
    series = {label: np.asarray(c, dtype=float) for label, c in curves.items()}
    x_max = max(len(c) for c in series.values()) - 1 or 1
    lo = min(float(c.min()) for c in series.values())
    hi = max(float(c.max()) for c in series.values())
    if hi == lo:
        hi = lo + 1.0

    def sx(i):
        return pad + (width - 2 * pad) * i / x_max

    def sy(v):
        return height - pad - (height - 2 * pad) * (v - lo) / (hi - lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad - 6}" y="{sy(hi) + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="10">{hi:.3g}</text>',
        f'<text x="{pad - 6}" y="{sy(lo) + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="10">{lo:.3g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="end" font-family="sans-serif" font-size="10">{x_max}</text>',
    ]
    for k, (label, c) in enumerate(series.items()):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{sx(i):.2f},{sy(v):.2f}" for i, v in enumerate(c))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(
            f'<text x="{width - pad + 4}" y="{pad + 14 * k}" font-family="sans-serif" font-size="10" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
    return Path(path)
