import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stochflux.field import Field, Grid
from stochflux.model import builtin_model

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

MODELS = ("burgers", "tanh_kappa_subquadratic")


@pytest.fixture(params=MODELS)
def model(request):
    return builtin_model(request.param)


@pytest.fixture
def grid16():
    return Grid(16.0, 256)


def sin_field(grid, amp=1.0, k=1, offset=0.0):
    return Field.from_function(grid, lambda x: offset + amp * np.sin(2 * np.pi * k * x / grid.length))


# criterion key -> PASS/FAIL line, filled by the acceptance suite
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE, key=str):
            terminalreporter.write_line(ACCEPTANCE[k])
