import numpy as np
import pytest

from a2k import _backend


@pytest.fixture
def rng():
    return np.random.default_rng(20240229)


@pytest.fixture(params=_backend.available())
def backend(request):
    """Run the test once per available kernel backend."""
    with _backend.use(request.param):
        yield request.param


def randn(rng, *shape, scale=1.0):
    return (scale * rng.standard_normal(shape)).astype(np.float32)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
