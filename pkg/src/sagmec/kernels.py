"""Kernel back-end selection.

The compiled extension is used when it imports; otherwise (or when
``SAGMEC_PURE_PYTHON=1``) the numpy fallback is used. ``BACKEND`` names the
active choice and :func:`use` switches it at runtime (tests run both).
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_FORCE_PY = os.environ.get("SAGMEC_PURE_PYTHON", "").strip() not in ("", "0")
_impl = _pykernels if (_FORCE_PY or _ckernels is None) else _ckernels
BACKEND = "python" if _impl is _pykernels else "cython"


def available() -> list[str]:
    return ["python"] + (["cython"] if _ckernels is not None else [])


def use(name: str) -> None:
    global _impl, BACKEND
    if name == "python":
        _impl = _pykernels
    elif name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built")
        _impl = _ckernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name


def interference_tensor(gain, cell, band, power, K, B):
    return _impl.interference_tensor(
        np.ascontiguousarray(gain, dtype=float), np.ascontiguousarray(cell, dtype=np.int64),
        np.ascontiguousarray(band, dtype=np.int64), np.ascontiguousarray(power, dtype=float), int(K), int(B),
    )


def deferred_acceptance(order, n_ok, band_rank, band_ok):
    match, proposals = _impl.deferred_acceptance(
        np.ascontiguousarray(order, dtype=np.int64), np.ascontiguousarray(n_ok, dtype=np.int64),
        np.ascontiguousarray(band_rank, dtype=np.int64), np.ascontiguousarray(band_ok, dtype=np.uint8),
    )
    return np.asarray(match, dtype=np.int64), int(proposals)


def blocking_pairs(dev_rank, dev_ok, band_rank, band_ok, match):
    return _impl.blocking_pairs(
        np.ascontiguousarray(dev_rank, dtype=np.int64), np.ascontiguousarray(dev_ok, dtype=np.uint8),
        np.ascontiguousarray(band_rank, dtype=np.int64), np.ascontiguousarray(band_ok, dtype=np.uint8),
        np.ascontiguousarray(match, dtype=np.int64),
    )


def project_simplex_rows(V, total=1.0):
    V = np.atleast_2d(np.asarray(V, dtype=float))
    total = np.broadcast_to(np.asarray(total, dtype=float).reshape(-1), (V.shape[0],))
    return _impl.project_simplex_rows(V, total)
