"""Hot-loop kernels: compiled extension when built, pure Python otherwise.

Set ``IQCGD_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

GRAD_QUADRATIC = _fallback.GRAD_QUADRATIC
GRAD_ZIGZAG = _fallback.GRAD_ZIGZAG
GRAD_OSCILLATOR = _fallback.GRAD_OSCILLATOR
POLICY_ZERO = _fallback.POLICY_ZERO
POLICY_PLUS = _fallback.POLICY_PLUS
POLICY_MINUS = _fallback.POLICY_MINUS
POLICY_SPHERE = _fallback.POLICY_SPHERE
POLICY_GREEDY = _fallback.POLICY_GREEDY
DIVERGENCE_RADIUS = _fallback.DIVERGENCE_RADIUS

compiled = None
if not os.environ.get("IQCGD_PURE_PYTHON"):
    try:
        from . import _core as compiled
    except ImportError:
        compiled = None

backend = compiled if compiled is not None else _fallback
BACKEND_NAME = "compiled" if compiled is not None else "python"

rescaled_partial_sums = backend.rescaled_partial_sums
jacobi_eigvalsh = backend.jacobi_eigvalsh
gd_run_scalar = backend.gd_run_scalar

__all__ = [
    "BACKEND_NAME",
    "backend",
    "rescaled_partial_sums",
    "jacobi_eigvalsh",
    "gd_run_scalar",
]
