"""Ground truths, pooling graphs, OR-channel outcomes and the V-set split.

A pooling design is stored as a CSR adjacency from individuals to tests
(``member_ptr``/``member_idx``).  The reverse direction (tests to members) is
built lazily because at n = 10**6 the transpose costs far more than every
decoder that only needs the individual side.
"""
from __future__ import annotations

import math
from dataclasses import InitVar, dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidParameterError, ModelViolationError

IDX_DTYPE = np.int32


def ensure_rng(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def row_edges(ptr: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Flat positions of every entry in the CSR rows ``rows`` (in row order)."""
    rows = np.asarray(rows, dtype=np.int64)
    starts = ptr[rows]
    lens = ptr[rows + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offsets = np.cumsum(lens) - lens
    return np.repeat(starts - offsets, lens) + np.arange(total, dtype=np.int64)


def k_from_theta(n: int, theta: float) -> int:
    """Number of infected individuals for population ``n`` and exponent ``theta``.

    Rounds n**theta half-up, with a floor of 1.  Raises if the result is not
    below ``n``.
    """
    if not 0 < theta < 1:
        raise InvalidParameterError(f"theta must lie in (0, 1), got {theta}")
    if n < 2:
        raise InvalidParameterError(f"n must be at least 2, got {n}")
    k = max(1, math.floor(n**theta + 0.5))
    if k >= n:
        raise InvalidParameterError(f"k = {k} is not below n = {n}")
    return k


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """The hidden infection vector: ``infected`` is its sorted support."""

    n: int
    infected: np.ndarray
    theta: float | None = None

    def __post_init__(self):
        inf = np.asarray(self.infected, dtype=np.int64).ravel()
        if self.n < 0:
            raise InvalidParameterError(f"n must be non-negative, got {self.n}")
        inf = np.sort(inf)
        if inf.size and (inf[0] < 0 or inf[-1] >= self.n):
            raise InvalidParameterError("infected index out of range")
        if inf.size > 1 and np.any(inf[1:] == inf[:-1]):
            raise InvalidParameterError("duplicate infected index")
        object.__setattr__(self, "infected", _frozen(inf))

    @classmethod
    def from_sigma(cls, sigma, theta: float | None = None) -> "GroundTruth":
        sigma = np.asarray(sigma).astype(bool)
        return cls(sigma.size, np.flatnonzero(sigma), theta)

    @property
    def k(self) -> int:
        return int(self.infected.size)

    @cached_property
    def sigma(self) -> np.ndarray:
        s = np.zeros(self.n, dtype=bool)
        s[self.infected] = True
        return _frozen(s)

    def restrict(self, individuals: np.ndarray) -> "GroundTruth":
        """Sub-instance on ``individuals``, relabelled 0..len-1 in the given order."""
        individuals = np.asarray(individuals, dtype=np.int64)
        return GroundTruth(individuals.size, np.flatnonzero(self.sigma[individuals]))


@dataclass(frozen=True, eq=False)
class PoolingDesign:
    """Bipartite individuals-to-tests graph.

    ``member_idx[member_ptr[x]:member_ptr[x+1]]`` lists the tests of individual
    ``x`` in increasing order without repeats.  Use the ``from_*`` constructors
    unless the arrays are already canonical.
    """

    n: int
    m: int
    member_ptr: np.ndarray
    member_idx: np.ndarray
    validate: InitVar[bool] = True

    def __post_init__(self, validate):
        ptr = np.asarray(self.member_ptr, dtype=np.int64)
        idx = np.asarray(self.member_idx, dtype=IDX_DTYPE)
        if validate:
            if self.n < 0 or self.m < 0:
                raise InvalidParameterError("n and m must be non-negative")
            if ptr.shape != (self.n + 1,) or ptr[0] != 0 or ptr[-1] != idx.size:
                raise InvalidParameterError("member_ptr does not match member_idx")
            if np.any(np.diff(ptr) < 0):
                raise InvalidParameterError("member_ptr must be non-decreasing")
            if idx.size and (idx.min() < 0 or idx.max() >= self.m):
                raise InvalidParameterError("test index out of range")
            if idx.size > 1:
                increasing = np.diff(idx) > 0
                # row boundaries are allowed to decrease
                boundary = np.zeros(idx.size - 1, dtype=bool)
                cuts = ptr[1:-1]
                cuts = cuts[(cuts > 0) & (cuts < idx.size)]
                boundary[cuts - 1] = True
                if not np.all(increasing | boundary):
                    raise InvalidParameterError("membership lists must be sorted and duplicate-free")
        object.__setattr__(self, "member_ptr", _frozen(ptr))
        object.__setattr__(self, "member_idx", _frozen(idx))

    # constructors -------------------------------------------------------

    @classmethod
    def from_edges(cls, n: int, m: int, rows, cols) -> "PoolingDesign":
        """Build from (individual, test) pairs in any order; repeats collapse."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise InvalidParameterError("rows and cols must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n:
                raise InvalidParameterError("individual index out of range")
            if cols.min() < 0 or cols.max() >= m:
                raise InvalidParameterError("test index out of range")
        key = np.unique(rows * max(m, 1) + cols)
        rows, cols = np.divmod(key, max(m, 1))
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=ptr[1:])
        return cls(n, m, ptr, cols.astype(IDX_DTYPE), validate=False)

    @classmethod
    def from_tests(cls, n: int, tests: Sequence[Iterable[int]]) -> "PoolingDesign":
        """Build from one member list per test."""
        rows, cols = [], []
        for a, members in enumerate(tests):
            members = list(members)
            rows.extend(members)
            cols.extend([a] * len(members))
        return cls.from_edges(n, len(tests), rows, cols)

    @classmethod
    def from_memberships(cls, m: int, memberships: Sequence[Iterable[int]]) -> "PoolingDesign":
        """Build from one test list per individual."""
        rows, cols = [], []
        for x, tests in enumerate(memberships):
            tests = list(tests)
            cols.extend(tests)
            rows.extend([x] * len(tests))
        return cls.from_edges(len(memberships), m, rows, cols)

    # derived views ------------------------------------------------------

    @property
    def num_edges(self) -> int:
        return int(self.member_idx.size)

    @cached_property
    def degrees(self) -> np.ndarray:
        return _frozen(np.diff(self.member_ptr))

    @cached_property
    def uniform_degree(self) -> int | None:
        """The common column weight, or None when degrees differ."""
        if self.n == 0:
            return 0
        d = int(self.member_ptr[1])
        return d if self.member_ptr[-1] == d * self.n and np.all(self.degrees == d) else None

    @cached_property
    def edge_rows(self) -> np.ndarray:
        """Individual owning each entry of ``member_idx``."""
        return _frozen(np.repeat(np.arange(self.n, dtype=IDX_DTYPE), self.degrees))

    @cached_property
    def test_sizes(self) -> np.ndarray:
        return _frozen(np.bincount(self.member_idx, minlength=self.m))

    @cached_property
    def _transpose(self) -> tuple[np.ndarray, np.ndarray]:
        order = np.argsort(self.member_idx, kind="stable")
        members = self.edge_rows[order]
        ptr = np.zeros(self.m + 1, dtype=np.int64)
        np.cumsum(self.test_sizes, out=ptr[1:])
        return _frozen(ptr), _frozen(members)

    @property
    def test_ptr(self) -> np.ndarray:
        return self._transpose[0]

    @property
    def test_members(self) -> np.ndarray:
        return self._transpose[1]

    @property
    def empty_tests(self) -> np.ndarray:
        return np.flatnonzero(self.test_sizes == 0)

    def tests_of(self, x: int) -> np.ndarray:
        return self.member_idx[self.member_ptr[x]:self.member_ptr[x + 1]]

    def members_of(self, a: int) -> np.ndarray:
        ptr, members = self._transpose
        return members[ptr[a]:ptr[a + 1]]

    @property
    def tests(self) -> list[np.ndarray]:
        ptr, members = self._transpose
        return np.split(members, ptr[1:-1]) if self.m else []

    @property
    def memberships(self) -> list[np.ndarray]:
        return np.split(self.member_idx, self.member_ptr[1:-1]) if self.n else []

    def __eq__(self, other):
        if not isinstance(other, PoolingDesign):
            return NotImplemented
        return (
            self.n == other.n
            and self.m == other.m
            and np.array_equal(self.member_ptr, other.member_ptr)
            and np.array_equal(self.member_idx, other.member_idx)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TestOutcomes:
    """Result vector of one design: ``positive[a]`` is True for a positive test."""

    __test__ = False  # keep pytest from collecting this class

    positive: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positive", _frozen(np.asarray(self.positive, dtype=bool).copy()))

    @property
    def m(self) -> int:
        return int(self.positive.size)


@dataclass(frozen=True)
class VPartition:
    v0_minus: frozenset
    v0_plus: frozenset
    v1_minus: frozenset
    v1_plus: frozenset


@dataclass(frozen=True, eq=False)
class Estimate:
    """A call vector ``calls`` (True = called infected) and the decoder that made it."""

    calls: np.ndarray
    origin: str = ""

    def __post_init__(self):
        object.__setattr__(self, "calls", _frozen(np.asarray(self.calls, dtype=bool).copy()))

    @property
    def n(self) -> int:
        return int(self.calls.size)

    @property
    def infected(self) -> np.ndarray:
        return np.flatnonzero(self.calls)


def sample_ground_truth(n: int, k: int, rng: np.random.Generator, theta: float | None = None) -> GroundTruth:
    """Draw a uniformly random k-subset of ``range(n)`` as the infected set."""
    if not 0 <= k <= n:
        raise InvalidParameterError(f"need 0 <= k <= n, got k={k}, n={n}")
    infected = rng.choice(n, size=k, replace=False) if k else np.zeros(0, dtype=np.int64)
    return GroundTruth(n, infected, theta)


def _check_sizes(design: PoolingDesign, truth: GroundTruth):
    if design.n != truth.n:
        raise InvalidParameterError(f"design has n={design.n} but truth has n={truth.n}")


def infected_counts(design: PoolingDesign, truth: GroundTruth) -> np.ndarray:
    """Number of infected members in every test."""
    _check_sizes(design, truth)
    edges = row_edges(design.member_ptr, truth.infected)
    return np.bincount(design.member_idx[edges], minlength=design.m)


def evaluate_tests(design: PoolingDesign, truth: GroundTruth) -> TestOutcomes:
    """Noiseless OR channel: a test is positive iff it has an infected member."""
    _check_sizes(design, truth)
    positive = np.zeros(design.m, dtype=bool)
    positive[design.member_idx[row_edges(design.member_ptr, truth.infected)]] = True
    return TestOutcomes(positive)


def row_any(design: PoolingDesign, edge_mask: np.ndarray) -> np.ndarray:
    """Per individual: is ``edge_mask`` set on any of its edges?"""
    d = design.uniform_degree
    if d is not None:
        if d == 0:
            return np.zeros(design.n, dtype=bool)
        return edge_mask.reshape(design.n, d).any(axis=1)
    out = np.zeros(design.n, dtype=bool)
    nonempty = design.degrees > 0
    if edge_mask.size:
        # empty rows are skipped, so each segment ends where the row ends
        out[nonempty] = np.logical_or.reduceat(edge_mask, design.member_ptr[:-1][nonempty])
    return out


def exonerated(design: PoolingDesign, outcomes: TestOutcomes) -> np.ndarray:
    """Mask of individuals that appear in at least one negative test."""
    if outcomes.m != design.m:
        raise InvalidParameterError(f"outcomes have length {outcomes.m}, design has m={design.m}")
    return row_any(design, ~outcomes.positive[design.member_idx])


def classify_vsets(design: PoolingDesign, truth: GroundTruth, outcomes: TestOutcomes) -> VPartition:
    """Split individuals into V0-, V0+, V1-, V1+.

    Individuals in no test land in V0+ (healthy) or V1+ (infected).
    """
    counts = infected_counts(design, truth)
    if outcomes.m != design.m:
        raise InvalidParameterError(f"outcomes have length {outcomes.m}, design has m={design.m}")
    if not np.array_equal(counts > 0, outcomes.positive):
        raise ModelViolationError("outcomes are inconsistent with the ground truth")
    sigma = truth.sigma
    has_negative = exonerated(design, outcomes)
    # an infected x is alone in test a iff a holds exactly one infected member
    has_solo = row_any(design, counts[design.member_idx] == 1)

    def _set(mask):
        return frozenset(np.flatnonzero(mask).tolist())

    return VPartition(
        v0_minus=_set(~sigma & has_negative),
        v0_plus=_set(~sigma & ~has_negative),
        v1_minus=_set(sigma & has_solo),
        v1_plus=_set(sigma & ~has_solo),
    )


def hamming_distance(a: Estimate, b: GroundTruth) -> int:
    if a.n != b.n:
        raise InvalidParameterError(f"length mismatch: {a.n} vs {b.n}")
    return int(np.count_nonzero(a.calls != b.sigma))
