"""Numerical kernels with a compiled core and a pure-numpy fallback.

The compiled module is used when it imports; set ``EVALSIM_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""
import importlib
import os

from . import _fallback

_speedups = None
if not os.environ.get("EVALSIM_PURE_PYTHON"):
    try:
        _speedups = importlib.import_module(__name__ + "._speedups")
    except ImportError:  # extension not built
        _speedups = None

_impl = _speedups if _speedups is not None else _fallback
BACKEND = "cython" if _speedups is not None else "python"

norm_cdf = _impl.norm_cdf
betainc = _impl.betainc
beta_ppf = _impl.beta_ppf
guttman_terms = _impl.guttman_terms


def implementations():
    """All importable backends, keyed by name (used by tests and benchmarks)."""
    out = {"python": _fallback}
    try:
        compiled = importlib.import_module(__name__ + "._speedups")
    except ImportError:
        return out
    out["cython"] = compiled
    return out
