"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the pure-Python
twin. Set ``GOALFLOW_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_ext = None
if os.environ.get("GOALFLOW_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _ext  # type: ignore[no-redef]
    except ImportError:  # pragma: no cover - depends on build
        _ext = None

BACKEND = "cython" if _ext is not None else "python"


def fmm(traversable: np.ndarray, sources: np.ndarray, backend: str | None = None) -> np.ndarray:
    """Raw multi-stencil FMM arrival times; no validation."""
    trav = np.ascontiguousarray(traversable, dtype=np.uint8)
    src = np.ascontiguousarray(sources, dtype=np.intp).reshape(-1, 2)
    if _pick(backend) == "cython":
        return _ext.fmm(trav, src)
    return _kernels_py.fmm(trav, src)


def label4(mask: np.ndarray, backend: str | None = None) -> tuple[np.ndarray, int]:
    """4-connected component labels in raster order of each component's first cell."""
    m = np.ascontiguousarray(mask, dtype=np.uint8)
    if _pick(backend) == "cython":
        return _ext.label4(m)
    return _kernels_py.label4(m)


def _pick(backend: str | None) -> str:
    if backend is None:
        return BACKEND
    if backend == "cython" and _ext is None:
        raise RuntimeError("compiled kernels are not available in this build")
    if backend not in ("cython", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend
