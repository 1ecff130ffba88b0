import numpy as np
import pytest

from fracdrift.model import ModelParams, kappa_of_beta


@pytest.fixture(scope="session")
def params_beta03():
    """d = 3, alpha = 1/2 with kappa chosen so that beta = 0.3."""
    base = ModelParams(d=3, alpha=0.5, kappa=1.0)
    return base.with_kappa(float(kappa_of_beta(0.3, base)))


@pytest.fixture(scope="session")
def params_beta03_sigma(params_beta03):
    return params_beta03.with_sigma_bounds()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split()[1][1:])):
            terminalreporter.write_line(line)
