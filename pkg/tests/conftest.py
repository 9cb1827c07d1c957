import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from fadingkf import catalog
from fadingkf.linalg import random_pd, random_psd_pair

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=1, max_value=4)


@st.composite
def pd_matrices(draw, n=None):
    n = draw(dims) if n is None else n
    rng = np.random.default_rng(draw(seeds))
    return random_pd(rng, n)


@st.composite
def psd_pairs(draw, n):
    """``(X, Y)`` with ``X >= Y >= 0``."""
    rng = np.random.default_rng(draw(seeds))
    rank = draw(st.integers(min_value=0, max_value=n))
    return random_psd_pair(rng, n, rank)


BATTERY = catalog.operator_battery()


@pytest.fixture(params=sorted(BATTERY), ids=str)
def battery_system(request):
    return BATTERY[request.param]


@pytest.fixture
def scalar():
    return catalog.scalar()


@pytest.fixture
def double_integrator():
    return catalog.double_integrator()


# status lines of the acceptance criteria, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
