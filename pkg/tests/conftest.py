import numpy as np
import pytest

from optical_esn import ThermometerEncoder, build_transfer_matrix, calibrate, generate_mackey_glass, MgParams

ACCEPTANCE_RESULTS: dict[str, str] = {}


@pytest.fixture(scope="session")
def mg_series():
    return generate_mackey_glass(MgParams(), 3001)


@pytest.fixture(scope="session")
def mg_encoder(mg_series):
    return calibrate(ThermometerEncoder(width=1000), mg_series.values[:2000])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_setup(n=64, width=50, seed=3):
    """Transfer matrix and encoder sized for an ``n``-neuron reservoir."""
    H = build_transfer_matrix(n, width + n, seed)
    enc = ThermometerEncoder(width=width, lo=0.0, hi=2.0)
    return H, enc


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[name])
