import numpy as np
import pytest

from cgrg import ModelParams, PoissonFiberKernel, TypePair


@pytest.fixture(scope="session")
def tp_quarter():
    """Symmetric 2-color type pair: pi=(1/2,1/2), omega identically 1/4."""
    return TypePair(("a", "b"), np.array([0.5, 0.5]), 0.25 * np.ones((2, 2)))


@pytest.fixture(scope="session")
def kernel_quarter_cap2(tp_quarter):
    """18 views per side: the small exhaustively-checkable support."""
    return PoissonFiberKernel(tp_quarter, cap=2)


@pytest.fixture(scope="session")
def kernel_quarter_cap1(tp_quarter):
    """8 views per side, 64 pair atoms."""
    return PoissonFiberKernel(tp_quarter, cap=1)


@pytest.fixture(scope="session")
def params_flat():
    """d=2, two colors, flat unit intensity; the workhorse instance."""
    return ModelParams(2, 400, ("a", "b"), np.array([0.5, 0.5]),
                       np.ones((2, 2)), seed=20260811)
