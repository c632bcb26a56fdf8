"""Pooling-graph generators.

Every generator takes its randomness from an explicit ``numpy.random.Generator``
so that a fixed seed reproduces the same design bit for bit.
"""
from __future__ import annotations

import logging
import math

import numpy as np

from . import bounds
from .errors import InvalidParameterError
from .model import IDX_DTYPE, PoolingDesign

log = logging.getLogger(__name__)

# Rows drawn per batch when a dense (chunk x m) block is materialised.
_DENSE_BLOCK = 1 << 22


def tuned_delta(m: int, k: int) -> int:
    """Column weight that leaves about half the tests positive.

    With every individual in ``round(m ln 2 / k)`` tests, a given infected
    individual shares each of its tests with no other infected one with
    probability close to 1/2.
    """
    if k == 0:
        return 0
    if m < 1 or k < 0:
        raise InvalidParameterError(f"need m >= 1 and k >= 0, got m={m}, k={k}")
    return max(1, math.floor(m * math.log(2) / k + 0.5))


def _rows_without_replacement(rows: int, m: int, delta: int, rng: np.random.Generator) -> np.ndarray:
    """``rows`` independent sorted draws of ``delta`` distinct values from range(m)."""
    out = np.empty((rows, delta), dtype=IDX_DTYPE)
    if rows == 0 or delta == 0:
        return out
    if 2 * delta <= m:
        # Draw with replacement, then redraw only the repeated slots until every
        # row is distinct.  The procedure is symmetric in the labels, so the
        # resulting subset is uniform over all delta-subsets.
        out[:] = rng.integers(0, m, size=(rows, delta), dtype=IDX_DTYPE)
        out.sort(axis=1)
        todo = np.flatnonzero(np.any(out[:, 1:] == out[:, :-1], axis=1))
        while todo.size:
            block = out[todo]
            repeat = np.zeros(block.shape, dtype=bool)
            repeat[:, 1:] = block[:, 1:] == block[:, :-1]
            block[repeat] = rng.integers(0, m, size=int(repeat.sum()), dtype=IDX_DTYPE)
            block.sort(axis=1)
            out[todo] = block
            todo = todo[np.any(block[:, 1:] == block[:, :-1], axis=1)]
        return out
    chunk = max(1, _DENSE_BLOCK // m)
    for start in range(0, rows, chunk):
        stop = min(rows, start + chunk)
        keys = rng.random((stop - start, m))
        picked = np.argpartition(keys, delta - 1, axis=1)[:, :delta] if delta < m else np.tile(np.arange(m), (stop - start, 1))
        picked.sort(axis=1)
        out[start:stop] = picked
    return out


def constant_column_design(n: int, m: int, delta: int, rng: np.random.Generator) -> PoolingDesign:
    """Each individual joins ``delta`` distinct tests chosen uniformly from ``m``."""
    if delta < 0 or m < 0 or n < 0:
        raise InvalidParameterError("n, m and delta must be non-negative")
    if delta > m:
        raise InvalidParameterError(f"delta={delta} exceeds m={m}")
    table = _rows_without_replacement(n, m, delta, rng)
    ptr = np.arange(n + 1, dtype=np.int64) * delta
    return PoolingDesign(n, m, ptr, table.ravel(), validate=False)


def bernoulli_design(n: int, m: int, p: float, rng: np.random.Generator) -> PoolingDesign:
    """Each (individual, test) pair is an edge independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"p must lie in [0, 1], got {p}")
    if m == 0 or n == 0:
        return PoolingDesign(n, m, np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=IDX_DTYPE))
    rows, cols = [], []
    chunk = max(1, _DENSE_BLOCK // m)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        r, c = np.nonzero(rng.random((stop - start, m)) < p)
        rows.append(r + start)
        cols.append(c)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=ptr[1:])
    return PoolingDesign(n, m, ptr, cols.astype(IDX_DTYPE), validate=False)


def dorfman_partition(n: int, group_size: int) -> PoolingDesign:
    """Consecutive blocks of ``group_size`` individuals, the last one possibly shorter."""
    if group_size < 1:
        raise InvalidParameterError(f"group_size must be >= 1, got {group_size}")
    m = -(-n // group_size)
    ptr = np.arange(n + 1, dtype=np.int64)
    idx = (np.arange(n, dtype=np.int64) // group_size).astype(IDX_DTYPE)
    return PoolingDesign(n, m, ptr, idx, validate=False)


def individual_design(indices, n: int) -> PoolingDesign:
    """One singleton test per listed individual, in list order."""
    indices = np.asarray(indices, dtype=np.int64).ravel()
    if indices.size:
        if indices.min() < 0 or indices.max() >= n:
            raise InvalidParameterError("individual index out of range")
        if np.unique(indices).size != indices.size:
            raise InvalidParameterError("duplicate individual index")
    deg = np.zeros(n, dtype=np.int64)
    deg[indices] = 1
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(deg, out=ptr[1:])
    test_of = np.empty(n, dtype=np.int64)
    test_of[indices] = np.arange(indices.size)
    idx = test_of[np.sort(indices)].astype(IDX_DTYPE)
    return PoolingDesign(n, int(indices.size), ptr, idx, validate=False)


def optimal_dorfman_group_size(n: int, k: int) -> int:
    """Group size minimising the exact expected Dorfman test count.

    Scans every s in [1, n]; ties go to the smaller s.  With k = 0 a single
    group covers everyone and ``n`` is returned.
    """
    if k == 0:
        log.warning("k=0: degenerate Dorfman instance, returning group size n=%d", n)
        return n
    if not 1 <= k <= n:
        raise InvalidParameterError(f"need 1 <= k <= n, got k={k}, n={n}")
    sizes = np.arange(1, n + 1)
    curve = bounds.dorfman_expected_curve(n, k, sizes)
    return int(sizes[np.argmin(curve)])
