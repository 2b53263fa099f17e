"""Backend selection for the hot loops.

The compiled extension ``crmtlr._kernels`` is used when it imports; otherwise,
or when ``CRMTLR_PURE_PYTHON`` is set to a non-empty value, the numpy versions
in ``crmtlr._kernels_py`` are used. ``BACKEND`` names the active one.
"""
import os

from . import _kernels_py as python_backend

compiled_backend = None
if not os.environ.get("CRMTLR_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

mtlr_nll_grad = _active.mtlr_nll_grad
cindex_counts = _active.cindex_counts
auroc_counts = _active.auroc_counts
