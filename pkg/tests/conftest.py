import numpy as np
import pytest

from bdnk.state import TransportModel


@pytest.fixture
def model():
    """Reference admissible model: eta = theta^3, chi = 6 eta, lam = 4 eta."""
    return TransportModel(eps0=1.0, eta0=1.0, a1=6.0, a2=4.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
