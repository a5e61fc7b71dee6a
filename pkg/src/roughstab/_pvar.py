"""Exact p-variation of grid paths by dynamic programming.

The quantity computed is

    max over strictly increasing index subsequences (a_k) of
        sum_k || x[a_k] - x[a_{k-1}] ||^p

which equals the p-th power of the p-variation seminorm of the sampled
path: the supremum over all partitions of a piecewise-constant/linear
grid path is attained on a subset of the grid points.

The O(n^2) recursion

    V(j) = max_{i<j} V(i) + ||x_j - x_i||^p

is compiled with numba when available; a pure-numpy fallback keeps the
module importable without a JIT.
"""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _dp_kernel(vals, p):
    k = vals.shape[0]
    m = vals.shape[1]
    cum = np.zeros(k)
    for j in range(1, k):
        best = 0.0
        for i in range(j):
            d2 = 0.0
            for q in range(m):
                diff = vals[j, q] - vals[i, q]
                d2 += diff * diff
            cand = cum[i] + d2 ** (p / 2.0)
            if cand > best:
                best = cand
        cum[j] = best
    return cum[k - 1]


def _dp_numpy(vals, p):
    k = vals.shape[0]
    cum = np.zeros(k)
    for j in range(1, k):
        d = np.sqrt(((vals[:j] - vals[j]) ** 2).sum(axis=1))
        cum[j] = np.max(cum[:j] + d**p)
    return cum[k - 1]


def _extrema_mask(x):
    """Boolean mask keeping endpoints and local extrema of a scalar path.

    For a scalar path the partition maximising sum |dx|^p (p >= 1) can be
    moved onto local extrema without decreasing the sum: for fixed
    neighbours the objective is convex in the interior value, so each
    interior partition point may be pushed to an extreme value of the
    path over its index range.  Plateau edges are kept to stay safe under
    ties.
    """
    k = x.shape[0]
    keep = np.zeros(k, dtype=np.bool_)
    keep[0] = keep[-1] = True
    if k > 2:
        d = np.diff(x)
        left, right = d[:-1], d[1:]
        keep[1:-1] = (left * right <= 0.0) | (left == 0.0) | (right == 0.0)
    return keep


def _coarsen_mask(vals, stride):
    """Keep every `stride`-th point plus per-component local extrema."""
    k = vals.shape[0]
    keep = np.zeros(k, dtype=np.bool_)
    keep[::stride] = True
    keep[0] = keep[-1] = True
    for q in range(vals.shape[1]):
        keep |= _extrema_mask(vals[:, q])
    return keep


# Above this many points the O(n^2) recursion gets a coarsening pre-pass.
COARSEN_THRESHOLD = 20_000
_EXTREMA_CUTOFF = 512  # scalar paths longer than this use the exact filter


def pvar_sum(vals: np.ndarray, p: float, allow_coarsen: bool = True) -> float:
    """Return max_partition sum ||dx||^p for the grid path `vals` (k, m)."""
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    if vals.ndim == 1:
        vals = vals[:, None]
    k = vals.shape[0]
    if k < 2:
        return 0.0
    if vals.shape[1] == 1 and k > _EXTREMA_CUTOFF:
        # exact reduction for scalar paths
        vals = vals[_extrema_mask(vals[:, 0])]
        k = vals.shape[0]
    if allow_coarsen and k > COARSEN_THRESHOLD:
        stride = int(np.ceil(k / COARSEN_THRESHOLD))
        vals = vals[_coarsen_mask(vals, stride)]
        log.warning(
            "p-variation coarsening pre-pass applied: %d -> %d points", k, vals.shape[0]
        )
    if _HAVE_NUMBA:
        return float(_dp_kernel(vals, float(p)))
    return float(_dp_numpy(vals, float(p)))
