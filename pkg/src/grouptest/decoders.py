"""One-stage decoders and exact enumeration oracles.

COMP, DD and the scored DD variant work entirely on the individual side of
the design, so they stay linear in the number of edges.  The enumeration
oracles are for small instances only and refuse rather than approximate when
the candidate space exceeds their cap.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, ModelViolationError, ResourceLimitError
from .model import (
    Estimate,
    GroundTruth,
    PoolingDesign,
    TestOutcomes,
    exonerated,
    infected_counts,
)

ENUMERATION_CAP = 10**7


def comp_decode(design: PoolingDesign, outcomes: TestOutcomes) -> Estimate:
    """Call healthy exactly those individuals seen in a negative test."""
    return Estimate(~exonerated(design, outcomes), "comp")


def unexplained_scores(design: PoolingDesign, outcomes: TestOutcomes) -> tuple[np.ndarray, np.ndarray]:
    """Per-individual count of positive tests whose other members are all exonerated.

    Returns ``(possible, score)`` where ``possible`` marks individuals with no
    negative test.  Scores of exonerated individuals are zero.
    """
    possible = ~exonerated(design, outcomes)
    on_possible = possible[design.edge_rows]
    # number of not-yet-exonerated members per test
    open_members = np.bincount(design.member_idx[on_possible], minlength=design.m)
    tests = design.member_idx
    proving = on_possible & outcomes.positive[tests] & (open_members[tests] == 1)
    score = np.bincount(design.edge_rows[proving], minlength=design.n)
    return possible, score


def scored_dd(design: PoolingDesign, outcomes: TestOutcomes, threshold: int) -> Estimate:
    """DD with a vote threshold: call x infected once ``threshold`` tests prove it."""
    if threshold < 1:
        raise InvalidParameterError(f"threshold must be >= 1, got {threshold}")
    possible, score = unexplained_scores(design, outcomes)
    origin = "dd" if threshold == 1 else f"scored_dd:{threshold}"
    return Estimate(possible & (score >= threshold), origin)


def dd_decode(design: PoolingDesign, outcomes: TestOutcomes) -> Estimate:
    """Definite defectives: only individuals some test proves infected."""
    return scored_dd(design, outcomes, 1)


def unexplained_fraction(design: PoolingDesign, truth: GroundTruth, outcomes: TestOutcomes, x: int) -> float:
    """Share of the tests of infected ``x`` that hold no other infected individual.

    This is a diagnostic and reads the ground truth.
    """
    if outcomes.m != design.m:
        raise InvalidParameterError("outcomes do not match design")
    if not 0 <= x < truth.n or not truth.sigma[x]:
        raise InvalidParameterError(f"individual {x} is not infected")
    tests = design.tests_of(x)
    if tests.size == 0:
        raise InvalidParameterError(f"individual {x} is in no test")
    counts = infected_counts(design, truth)
    return float(np.mean(counts[tests] == 1))


@dataclass(frozen=True, eq=False)
class MarginalTable:
    marginal: np.ndarray
    support_count: int


def _consistent_iter(design: PoolingDesign, outcomes: TestOutcomes, k: int, cap: int):
    n = design.n
    if not 0 <= k <= n:
        raise InvalidParameterError(f"need 0 <= k <= n, got k={k}")
    if outcomes.m != design.m:
        raise InvalidParameterError("outcomes do not match design")
    size = math.comb(n, k)
    if size > cap:
        raise ResourceLimitError(f"C({n}, {k}) = {size} candidates exceed the cap of {cap}")
    candidates = np.flatnonzero(~exonerated(design, outcomes)).tolist()
    positive = np.flatnonzero(outcomes.positive)
    # bitset of positive tests covered by each candidate
    pos_bit = {int(a): 1 << i for i, a in enumerate(positive)}
    cover = {x: sum(pos_bit.get(int(a), 0) for a in design.tests_of(x)) for x in candidates}
    full = (1 << len(positive)) - 1
    for subset in itertools.combinations(candidates, k):
        acc = 0
        for x in subset:
            acc |= cover[x]
        if acc == full:
            yield subset


def consistent_configurations(
    design: PoolingDesign, outcomes: TestOutcomes, k: int, cap: int = ENUMERATION_CAP
) -> list[tuple[int, ...]]:
    """All weight-k infected sets reproducing ``outcomes``, lexicographically."""
    return list(_consistent_iter(design, outcomes, k, cap))


def map_margins(design: PoolingDesign, outcomes: TestOutcomes, k: int, cap: int = ENUMERATION_CAP) -> MarginalTable:
    """Posterior infection probabilities under a uniform prior on weight-k sets."""
    counts = np.zeros(design.n, dtype=np.int64)
    support = 0
    for subset in _consistent_iter(design, outcomes, k, cap):
        counts[list(subset)] += 1
        support += 1
    if support == 0:
        raise ModelViolationError(f"no infected set of size {k} explains the outcomes")
    return MarginalTable(counts / support, support)
