"""Distance kernels shared by retrieval and k-means.

Numba-compiled loops are used when numba imports and ``HIMA_JIT`` is not set
to ``0``; otherwise the vectorized numpy versions run. Both return the lowest
index on exact ties.
"""
from __future__ import annotations

import os

import numpy as np


def _numpy_nearest_index(corpus, query):
    d = ((corpus - query) ** 2).sum(axis=1)
    return int(np.argmin(d))


def _numpy_assign(points, centroids):
    d = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d, axis=1)
    return labels.astype(np.int64), d[np.arange(len(points)), labels]


def _numpy_sq_distances(corpus, query):
    return ((corpus - query) ** 2).sum(axis=1)


numpy_kernels = {
    "nearest_index": _numpy_nearest_index,
    "assign": _numpy_assign,
    "sq_distances": _numpy_sq_distances,
}

JIT_REQUESTED = os.environ.get("HIMA_JIT", "1").strip().lower() not in ("0", "false", "no", "off")

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

jit_kernels = None
if numba is not None:

    @numba.njit(cache=True)
    def _jit_sq_distances(corpus, query):
        n, d = corpus.shape
        out = np.empty(n)
        for i in range(n):
            s = 0.0
            for j in range(d):
                diff = corpus[i, j] - query[j]
                s += diff * diff
            out[i] = s
        return out

    @numba.njit(cache=True)
    def _jit_nearest_index(corpus, query):
        n, d = corpus.shape
        best = -1
        best_d = np.inf
        for i in range(n):
            s = 0.0
            for j in range(d):
                diff = corpus[i, j] - query[j]
                s += diff * diff
                if s > best_d:
                    break
            if s < best_d:
                best_d = s
                best = i
        return best

    @numba.njit(cache=True)
    def _jit_assign(points, centroids):
        n, d = points.shape
        k = centroids.shape[0]
        labels = np.empty(n, dtype=np.int64)
        mins = np.empty(n)
        for i in range(n):
            best = 0
            best_d = np.inf
            for c in range(k):
                s = 0.0
                for j in range(d):
                    diff = points[i, j] - centroids[c, j]
                    s += diff * diff
                if s < best_d:
                    best_d = s
                    best = c
            labels[i] = best
            mins[i] = best_d
        return labels, mins

    jit_kernels = {
        "nearest_index": lambda c, q: int(_jit_nearest_index(c, q)),
        "assign": _jit_assign,
        "sq_distances": _jit_sq_distances,
    }

USING_JIT = JIT_REQUESTED and jit_kernels is not None
_active = jit_kernels if USING_JIT else numpy_kernels


def _as2d(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def nearest_index(corpus, query) -> int:
    """Row of ``corpus`` with the smallest squared distance to ``query``."""
    corpus = _as2d(corpus)
    if corpus.shape[0] == 0:
        raise ValueError("empty corpus")
    return _active["nearest_index"](corpus, _as2d(query))


def assign(points, centroids):
    """Nearest-centroid labels and the squared distance to that centroid."""
    return _active["assign"](_as2d(points), _as2d(centroids))


def sq_distances(corpus, query):
    return _active["sq_distances"](_as2d(corpus), _as2d(query))


def backend() -> str:
    return "numba" if USING_JIT else "numpy"
