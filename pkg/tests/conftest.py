import warnings

import numpy as np
import pytest
from hypothesis import settings

from snaploc.discretization import SpatialGrid
from snaploc.pipeline import PipelineConfig, run
from snaploc.problems import ProblemSpec

settings.register_profile("default", deadline=None, derandomize=True)
settings.load_profile("default")

_RESULTS: dict = {}
ACCEPTANCE_LINES: list[str] = []


def cached_run(config: PipelineConfig):
    """Pipeline results shared across test modules."""
    if config not in _RESULTS:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _RESULTS[config] = run(config)
    return _RESULTS[config]


def seed_cache(config: PipelineConfig, result) -> None:
    _RESULTS[config] = result


def zero_problem(alpha: float = 1.0, shape=None, **kw) -> ProblemSpec:
    """f = y_d = y0 = 0 with one control shape (default x(1-x))."""
    zero = lambda x, t: 0.0 * (x + t)  # noqa: E731
    chi = shape if shape is not None else (lambda x: x * (1.0 - x))
    return ProblemSpec(name="zero", alpha=alpha, shapes=(chi,), f=zero, yd=zero,
                       yd_t=zero, yd_xx=zero, y0=lambda x: 0.0 * x, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fine():
    return SpatialGrid.from_spacing(0.01)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
