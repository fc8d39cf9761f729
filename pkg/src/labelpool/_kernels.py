"""Hot similarity kernels.

Two interchangeable backends compute the (queries x classes) score matrix:
a numba ``@njit`` kernel with scalar loops, and a vectorized pure-numpy
fallback. The numpy path is selected when numba is unavailable or when the
environment variable ``LABELPOOL_DISABLE_NUMBA`` is set to a non-empty value
other than ``0``. Both accumulate in float64 with no fastmath, so results do
not depend on the backend beyond normal float noise, and per-query work is
independent, so parallel execution reproduces sequential results bit-for-bit.

L1/L2 need a materialized difference per pair, which the njit loops fuse
away (5-9x over numpy broadcasting at desk shapes). Cosine is a plain
matrix product, where BLAS beats scalar loops by ~10x, so the dispatcher
sends cosine to the numpy path even when numba is active; run
``benchmarks/bench_kernels.py`` to reproduce both numbers.

Kind codes: 0 = L1 (negated distance), 1 = L2 (negated), 2 = cosine.
"""

from __future__ import annotations

import math
import os

import numpy as np

KIND_L1 = 0
KIND_L2 = 1
KIND_COSINE = 2

_env = os.environ.get("LABELPOOL_DISABLE_NUMBA", "")
_numba_disabled = _env not in ("", "0")

if not _numba_disabled:
    try:
        from numba import njit, prange

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - exercised via env flag instead
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA


def _segment_scores_numpy(kind, vectors, offsets, queries, v_norms, q_norms):
    n_q = queries.shape[0]
    n_vec, d = vectors.shape
    if kind == KIND_COSINE:
        smat = queries @ vectors.T
        smat /= q_norms[:, None]
        smat /= v_norms[None, :]
    else:
        smat = np.empty((n_q, n_vec), dtype=np.float64)
        # block the query axis so the (block, n_vec, d) temporary stays small
        block = max(1, int(4_000_000 // max(n_vec * d, 1)))
        for start in range(0, n_q, block):
            stop = min(start + block, n_q)
            diff = queries[start:stop, None, :] - vectors[None, :, :]
            if kind == KIND_L1:
                smat[start:stop] = -np.abs(diff).sum(axis=2)
            else:
                smat[start:stop] = -np.sqrt(np.square(diff).sum(axis=2))
    return np.maximum.reduceat(smat, offsets[:-1], axis=1)


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _segment_scores_njit(kind, vectors, offsets, queries, v_norms, q_norms, out):  # pragma: no cover - compiled
        n_q = queries.shape[0]
        n_cls = offsets.shape[0] - 1
        d = vectors.shape[1]
        for i in prange(n_q):
            for k in range(n_cls):
                best = -np.inf
                for j in range(offsets[k], offsets[k + 1]):
                    if kind == 0:
                        acc = 0.0
                        for t in range(d):
                            acc += abs(vectors[j, t] - queries[i, t])
                        s = -acc
                    elif kind == 1:
                        acc = 0.0
                        for t in range(d):
                            diff = vectors[j, t] - queries[i, t]
                            acc += diff * diff
                        s = -math.sqrt(acc)
                    else:
                        acc = 0.0
                        for t in range(d):
                            acc += vectors[j, t] * queries[i, t]
                        s = acc / (v_norms[j] * q_norms[i])
                    if s > best:
                        best = s
                out[i, k] = best

    def _segment_scores_numba(kind, vectors, offsets, queries, v_norms, q_norms):
        out = np.empty((queries.shape[0], offsets.shape[0] - 1), dtype=np.float64)
        _segment_scores_njit(kind, vectors, offsets, queries, v_norms, q_norms, out)
        return out

else:
    _segment_scores_numba = None


def segment_scores(kind, vectors, offsets, queries, v_norms, q_norms):
    """Score matrix (n_queries, n_classes): per class, the max similarity of
    the query against that class's contiguous row segment of ``vectors``.

    All arrays must be float64 (int64 offsets); norms are only read for the
    cosine kind and must be non-zero there.
    """
    if USE_NUMBA and kind != KIND_COSINE:
        return _segment_scores_numba(kind, vectors, offsets, queries, v_norms, q_norms)
    return _segment_scores_numpy(kind, vectors, offsets, queries, v_norms, q_norms)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def backends() -> dict:
    """Backend name -> callable, for equivalence tests and benchmarks."""
    table = {"numpy": _segment_scores_numpy}
    if HAVE_NUMBA:
        table["numba"] = _segment_scores_numba
    return table
