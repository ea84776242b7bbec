"""Hot numeric kernels: sparse-times-dense products behind the trainers.

Two interchangeable backends:

* ``numba`` -- @njit row loops over raw CSR arrays (default when numba
  imports cleanly);
* ``numpy`` -- scipy.sparse matmuls, no JIT anywhere.

Selection is decided once at import time from the ``CREDLOOP_NUMBA``
environment variable: ``0`` forces the numpy path, ``1`` requires numba
(import error if missing), unset picks numba when available.  Both backends
compute the same float64 quantities; ``python -m credloop.bench`` compares
their throughput.
"""

from __future__ import annotations

import os

import numpy as np
from scipy import sparse


def _requested() -> bool | None:
    v = os.environ.get("CREDLOOP_NUMBA", "").strip().lower()
    if v in ("0", "false", "no", "off"):
        return False
    if v in ("1", "true", "yes", "on"):
        return True
    return None


_want = _requested()
_numba_active = False
if _want is not False:
    try:
        from numba import njit

        _numba_active = True
    except ImportError:
        if _want is True:
            raise ImportError("CREDLOOP_NUMBA=1 but numba is not importable")


def backend_name() -> str:
    return "numba" if _numba_active else "numpy"


# -- numpy / scipy backend ---------------------------------------------------


def _matmul_numpy(x: sparse.csr_matrix, w: np.ndarray) -> np.ndarray:
    return np.asarray(x @ w)


def _rmatmul_numpy(x: sparse.csr_matrix, r: np.ndarray) -> np.ndarray:
    return np.asarray(x.T @ r)


# -- numba backend -----------------------------------------------------------

if _numba_active:

    # Explicit innermost loops: the slice form out[i, :] += v * w[j, :]
    # compiles to a temporary-allocating path and runs ~9x slower.
    @njit(cache=True, fastmath=True)
    def _csr_matmul(data, indices, indptr, w, out):
        n_rows = indptr.shape[0] - 1
        n_cols = w.shape[1]
        for i in range(n_rows):
            for k in range(indptr[i], indptr[i + 1]):
                v = data[k]
                j = indices[k]
                for c in range(n_cols):
                    out[i, c] += v * w[j, c]
        return out

    @njit(cache=True, fastmath=True)
    def _csr_rmatmul(data, indices, indptr, r, out):
        n_rows = indptr.shape[0] - 1
        n_cols = r.shape[1]
        for i in range(n_rows):
            for k in range(indptr[i], indptr[i + 1]):
                v = data[k]
                j = indices[k]
                for c in range(n_cols):
                    out[j, c] += v * r[i, c]
        return out

    def _matmul_numba(x: sparse.csr_matrix, w: np.ndarray) -> np.ndarray:
        out = np.zeros((x.shape[0], w.shape[1]), dtype=np.float64)
        return _csr_matmul(x.data, x.indices, x.indptr, w, out)

    def _rmatmul_numba(x: sparse.csr_matrix, r: np.ndarray) -> np.ndarray:
        out = np.zeros((x.shape[1], r.shape[1]), dtype=np.float64)
        return _csr_rmatmul(x.data, x.indices, x.indptr, r, out)


def matmul(x: sparse.csr_matrix, w: np.ndarray) -> np.ndarray:
    """Dense ``x @ w`` for CSR ``x`` (n, F) and dense ``w`` (F, L)."""
    w = np.ascontiguousarray(w, dtype=np.float64)
    if _numba_active:
        return _matmul_numba(x, w)
    return _matmul_numpy(x, w)


def rmatmul(x: sparse.csr_matrix, r: np.ndarray) -> np.ndarray:
    """Dense ``x.T @ r`` for CSR ``x`` (n, F) and dense ``r`` (n, L)."""
    r = np.ascontiguousarray(r, dtype=np.float64)
    if _numba_active:
        return _rmatmul_numba(x, r)
    return _rmatmul_numpy(x, r)


def backends() -> dict[str, tuple]:
    """Every available (matmul, rmatmul) pair, keyed by backend name."""
    table: dict[str, tuple] = {"numpy": (_matmul_numpy, _rmatmul_numpy)}
    if _numba_active:
        table["numba"] = (_matmul_numba, _rmatmul_numba)
    return table
