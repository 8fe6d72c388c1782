import numpy as np
import pytest

from relight import nn


def finite_difference_grads(net, batch, h=1e-4):
    """Central differences of the batch loss, one parameter at a time."""
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + h
            up = nn.loss_and_grads(net, batch)[0]
            p[idx] = old - h
            down = nn.loss_and_grads(net, batch)[0]
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def random_batch(rng, in_dim, size):
    return nn.TrainBatch(
        rng.normal(size=(size, in_dim)),
        rng.integers(0, 2, size=size),
        rng.normal(size=size),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


def report(criterion, passed, detail):
    """Record one acceptance line; printed in the terminal summary."""
    ACCEPTANCE_LINES[criterion] = f"{criterion} {'PASS' if passed else 'FAIL'}  {detail}"
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
