import numpy as np
import pytest

from orthoreg.data import OutcomeKind, PanelDataset


def make_panel(n=200, T=2, seed=0, kind="continuous", d=1, baseline=0):
    """Small random panel for plumbing tests."""
    rng = np.random.default_rng(seed)
    X = tuple(rng.standard_normal((n, d)) for _ in range(T))
    A = (rng.random((n, T)) < 0.5).astype(float)
    event = None
    grid = None
    if kind == "continuous":
        y = rng.standard_normal(n) + A.sum(axis=1)
    elif kind == "count":
        y = rng.poisson(np.exp(0.3 * A.sum(axis=1)))
    elif kind == "binary":
        y = (rng.random(n) < 0.4).astype(float)
    else:
        y = rng.exponential(T, n)
        event = (y < T).astype(float)
        y = np.minimum(y, T)
        grid = np.arange(T, dtype=float)
    B = rng.standard_normal((n, baseline)) if baseline else None
    return PanelDataset([f"s{i}" for i in range(n)], X, A, OutcomeKind(kind), y, event=event, time_grid=grid,
                        baseline=B)


@pytest.fixture
def panel_factory():
    return make_panel


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
