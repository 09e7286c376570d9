import math

import numpy as np
import pytest

from rwre_lab.environment import Environment, OmegaDistribution

# rho in {2, 1/4} with q chosen so that q 2^1.5 + (1 - q) 4^-1.5 = 1
Q_TWO_POINT = (1.0 - 4.0**-1.5) / (2.0**1.5 - 4.0**-1.5)

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def two_point():
    """Lattice fixture with exact s = 1.5."""
    return OmegaDistribution.from_rhos(2.0, 0.25, Q_TWO_POINT)


@pytest.fixture(scope="session")
def beta_stat():
    """Non-lattice fixture, s = 1.5, E rho = 1/2, v_P = 1/3."""
    return OmegaDistribution.beta(2.0, 0.5)


@pytest.fixture(scope="session")
def beta_slow():
    """Non-lattice fixture, s = 1.5, E rho = 3/4."""
    return OmegaDistribution.beta(3.0, 1.5)


def homogeneous(omega, lo, hi):
    return Environment(lo, np.full(hi - lo, omega))


def env_from_rhos(rhos, left=0):
    r = np.asarray(rhos, dtype=float)
    return Environment(left, 1.0 / (1.0 + r))


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}")


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))
