import numpy as np
import pytest
from hypothesis import settings, strategies as st

from ssa.expfam import ExpFamModel

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

MODELS = {
    "bernoulli": ExpFamModel.bernoulli(),
    "poisson": ExpFamModel.poisson(50.0),
    "gaussian": ExpFamModel.gaussian(sigma=0.7, theta_min=-20.0, theta_max=20.0),
}


def theta_strategy(family: str):
    if family == "bernoulli":
        return st.floats(0.01, 0.99)
    if family == "poisson":
        return st.floats(0.05, 40.0)
    return st.floats(-10.0, 10.0)


def random_thetas(model: ExpFamModel, size, rng: np.random.Generator) -> np.ndarray:
    if model.family == "bernoulli":
        return rng.uniform(0.02, 0.98, size)
    if model.family == "poisson":
        return rng.uniform(0.1, 30.0, size)
    return rng.uniform(-5.0, 5.0, size)


@pytest.fixture(params=sorted(MODELS))
def model(request) -> ExpFamModel:
    return MODELS[request.param]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
