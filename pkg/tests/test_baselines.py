import numpy as np
import pytest

from relight.baselines import FixedCycleController, SotlController, green_red_demand
from relight.env import TrafficEnv
from relight.errors import ConfigurationError
from relight.flows import preset
from relight.sim import Phase, Simulator


def obs_with(queues, phase=Phase.WEG):
    obs = np.zeros(40)
    obs[:12] = queues
    obs[36 + int(phase)] = 1
    obs[38 + 1 - int(phase)] = 1
    return obs


@pytest.mark.parametrize("t,expected", [(10, 0), (29, 0), (30, 1), (41, 1)])
def test_fixed_cycle_rule(t, expected):
    assert FixedCycleController(30).act(t) == expected


def test_fixed_cycle_minimum_duration():
    ctrl = FixedCycleController(5)
    assert all(ctrl.act(t) == 1 for t in (5, 7, 12))
    with pytest.raises(ConfigurationError):
        FixedCycleController(4)


def test_fixed_cycle_split_per_phase():
    ctrl = FixedCycleController((20, 40))
    assert ctrl.act(25, Phase.WEG) == 1 and ctrl.act(25, Phase.NSG) == 0


def switch_times(ctrl, flow="unequal", decisions=300):
    env = TrafficEnv(Simulator(flow=preset(flow, 0.05), seed=0))
    ctrl.reset()
    obs = env.observe()
    times = []
    for _ in range(decisions):
        a = ctrl.decide(env, obs)
        if a:
            times.append(env.sim.t)
        if a and isinstance(ctrl, SotlController):
            assert env.time_in_phase >= ctrl.phi_min
        obs, _ = env.step(a)
    return times


def test_fixed_cycle_is_periodic():
    times = switch_times(FixedCycleController(27))
    gaps = np.diff(times)
    # each green of 27 s plus its 3 s yellow
    assert set(gaps) == {30.0}
    assert times[2] - times[0] == 27 + 27 + 2 * 3


def test_green_red_demand_reads_phase():
    q = [1, 0, 0, 2, 0, 0, 3, 0, 0, 0, 0, 4]
    assert green_red_demand(obs_with(q, Phase.WEG)) == (7, 3)
    assert green_red_demand(obs_with(q, Phase.NSG)) == (3, 7)


def test_sotl_no_red_demand_never_switches():
    ctrl = SotlController()
    acc = 0.0
    for _ in range(100):
        action, acc = ctrl.act(obs_with([0] * 6 + [5] * 6), 100, acc)
        assert action == 0 and acc == 0


def test_sotl_min_green_guard():
    action, acc = SotlController().act(obs_with([20] * 6 + [0] * 6), 5, 1000.0)
    assert action == 0 and acc == 1000 + 120 * 5


def test_sotl_switches_and_resets():
    # accumulator 48 + 1 queued red vehicle * 5 s = 53 >= 50; green side empty
    action, acc = SotlController().act(obs_with([1] + [0] * 11), 10, 48.0)
    assert (action, acc) == (1, 0.0)


def test_sotl_respects_green_cutoff():
    action, _ = SotlController(mu=3).act(obs_with([5] * 6 + [1] * 6), 60, 500.0)
    assert action == 0


def test_sotl_run_respects_min_green():
    times = switch_times(SotlController(theta=20, phi_min=15))
    assert len(times) > 3


def test_sotl_validation():
    with pytest.raises(ConfigurationError):
        SotlController(theta=0)
    with pytest.raises(ConfigurationError):
        SotlController().act(obs_with([0] * 12), 0, -1.0)


def test_controllers_deterministic():
    assert switch_times(SotlController(), "equal") == switch_times(SotlController(), "equal")
    assert switch_times(FixedCycleController()) == switch_times(FixedCycleController())
