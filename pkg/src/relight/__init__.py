"""Randomized-ensemble double-DQN traffic signal control on a built-in microsimulator."""

from .agent import RELightAgent, ReplayBuffer, Transition
from .baselines import FixedCycleController, SotlController
from .env import RewardBreakdown, RewardWeights, TrafficEnv, env_step, observe, queue_variance
from .errors import ConfigurationError, DomainError, FlowParseError, SignalInProgressError
from .flows import FlowInterval, FlowSpec, ingest_real_arrivals, preset
from .harness import ExperimentConfig, MetricsRecord, emit_plots, run_experiment, run_sweep
from .sim import Phase, SimConfig, Simulator, reset

__version__ = "0.1.0"

__all__ = [
    "RELightAgent",
    "ReplayBuffer",
    "Transition",
    "FixedCycleController",
    "SotlController",
    "RewardBreakdown",
    "RewardWeights",
    "TrafficEnv",
    "env_step",
    "observe",
    "queue_variance",
    "ConfigurationError",
    "DomainError",
    "FlowParseError",
    "SignalInProgressError",
    "FlowInterval",
    "FlowSpec",
    "ingest_real_arrivals",
    "preset",
    "ExperimentConfig",
    "MetricsRecord",
    "emit_plots",
    "run_experiment",
    "run_sweep",
    "Phase",
    "SimConfig",
    "Simulator",
    "reset",
]
