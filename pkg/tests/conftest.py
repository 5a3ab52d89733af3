import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pqlap.mesh import build_interval_mesh  # noqa: E402
from pqlap.quasi_eigen import eta_sequence, nu_sequence  # noqa: E402


@pytest.fixture(scope="session")
def mesh256():
    return build_interval_mesh(256)


@pytest.fixture(scope="session")
def eta0(mesh256):
    """Default 1D config, alpha = 0, q = 4."""
    return eta_sequence(mesh256, 0.0, None, 4.0, 6)


@pytest.fixture(scope="session")
def eta1(mesh256):
    """Default 1D config, alpha = 1, p = 2, q = 4."""
    return eta_sequence(mesh256, 1.0, 2.0, 4.0, 6)


@pytest.fixture(scope="session")
def nu0(mesh256, eta0):
    return nu_sequence(mesh256, 0.0, None, 4.0, 3, eta0)


@pytest.fixture(scope="session")
def nu1(mesh256, eta1):
    return nu_sequence(mesh256, 1.0, 2.0, 4.0, 3, eta1)


@pytest.fixture(scope="session")
def lam1(eta0):
    return eta0[0].value


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
