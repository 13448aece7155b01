import numpy as np
import pytest

from spikesurv.dataset import build_time_grid, generate_synthetic
from spikesurv.models import fit_model
from spikesurv.training import TrainConfig


@pytest.fixture(scope="session")
def cohort():
    return generate_synthetic(300, 4, [0, 1], [1.0, -0.7], 0.1, 0.03, seed=11)


@pytest.fixture(scope="session")
def grid(cohort):
    return build_time_grid(cohort, 6)


@pytest.fixture(scope="session")
def bayes_model(cohort, grid):
    model, trace = fit_model("bayes_mtlr", cohort, grid, TrainConfig(epochs=15, seed=3))
    return model


@pytest.fixture(scope="session")
def fitted_models(cohort, grid, bayes_model):
    cfg = TrainConfig(epochs=15, seed=3)
    out = {"bayes_mtlr": bayes_model}
    for kind in ("mtlr", "neural_mtlr", "cox"):
        out[kind] = fit_model(kind, cohort, grid, cfg)[0]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
