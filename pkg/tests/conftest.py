import numpy as np
import pytest

from lowrank_sysid import _kernels


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    if request.param == "numba" and not _kernels.NUMBA_AVAILABLE:
        pytest.skip("numba not installed")
    previous = _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(previous)
