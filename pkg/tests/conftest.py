import numpy as np
import pytest

from quadsub.catalog import get_entry
from quadsub.symbol_core import QuadraticSymbol


@pytest.fixture
def harmonic():
    return get_entry("harmonic").symbol


@pytest.fixture
def davies():
    return get_entry("davies").symbol


@pytest.fixture
def kfp():
    return get_entry("kfp").symbol


@pytest.fixture
def chain():
    return get_entry("chain").symbol


@pytest.fixture
def degenerate():
    return get_entry("degenerate").symbol


@pytest.fixture
def free_particle():
    """xi^2 alone: S is the x-axis."""
    return QuadraticSymbol(n=1, Q_re=np.diag([0.0, 1.0]), Q_im=np.zeros((2, 2)))


@pytest.fixture
def harmonic_2d():
    return QuadraticSymbol(n=2, Q_re=np.eye(4), Q_im=np.zeros((4, 4)))
