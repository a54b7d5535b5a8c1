"""Solver backend selection.

The compiled kernel is preferred when its extension module built; the
numpy fallback is always available. ``PVBDFL_BACKEND`` forces the choice
(``python`` or ``cython``). Everything but the three hot entry points
(``solve``, ``kkt_factor``, ``kkt_solve``) is shared plumbing from the
pure-python module.
"""

from __future__ import annotations

import os

from ._ipm_py import (  # noqa: F401  (re-exported shared helpers)
    CONVERGED,
    MAX_ITER,
    NUMERICAL_FAILURE,
    build_dense_eq,
    build_vectors,
    layout,
    problem_dims,
)
from . import _ipm_py


def _select():
    forced = os.environ.get("PVBDFL_BACKEND", "").strip().lower()
    if forced == "python":
        return _ipm_py, "python"
    try:
        from . import _ipm_cy
    except ImportError:
        if forced == "cython":
            raise ImportError(
                "PVBDFL_BACKEND=cython but the compiled kernel is not built"
            )
        return _ipm_py, "python"
    return _ipm_cy, "cython"


_impl, BACKEND_NAME = _select()

solve = _impl.solve
kkt_factor = _impl.kkt_factor
kkt_solve = _impl.kkt_solve


def backend_name() -> str:
    """Name of the active solver kernel ('cython' or 'python')."""
    return BACKEND_NAME


def available_backends() -> dict:
    """Importable kernels by name (used by the benchmark)."""
    impls = {"python": _ipm_py}
    try:
        from . import _ipm_cy

        impls["cython"] = _ipm_cy
    except ImportError:
        pass
    return impls
