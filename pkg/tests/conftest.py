import numpy as np
import pytest

from iqcgd import _kernels
from iqcgd._kernels import _fallback

try:
    from iqcgd._kernels import _core
except ImportError:
    _core = None

BACKENDS = [("python", _fallback)] + ([("compiled", _core)] if _core is not None else [])
KERNEL_FUNCS = ("rescaled_partial_sums", "jacobi_eigvalsh", "gd_run_scalar")


@pytest.fixture(params=[name for name, _ in BACKENDS])
def backend(request, monkeypatch):
    """Route every kernel call through one backend."""
    mod = dict(BACKENDS)[request.param]
    for fn in KERNEL_FUNCS:
        monkeypatch.setattr(_kernels, fn, getattr(mod, fn))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
