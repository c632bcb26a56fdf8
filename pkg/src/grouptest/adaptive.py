"""Two-stage pipelines: the estimate-then-verify scheme and Dorfman pooling.

The estimate-then-verify scheme runs a stage-1 estimator on a tuned
constant-column design, then in one parallel second stage tests every
suspected infected individual alone and runs COMP on the suspected healthy
ones with a budget of (1 + eps) k / ln^2 2.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import bounds
from .decoders import comp_decode, scored_dd
from .designs import (
    constant_column_design,
    dorfman_partition,
    individual_design,
    optimal_dorfman_group_size,
    tuned_delta,
)
from .errors import InvalidParameterError
from .model import (
    Estimate,
    GroundTruth,
    PoolingDesign,
    TestOutcomes,
    ensure_rng,
    evaluate_tests,
    hamming_distance,
    k_from_theta,
    sample_ground_truth,
)

ESTIMATORS = ("comp", "dd", "scored_dd", "synthetic")
DECODERS = ("comp", "dd", "scored_dd")


@dataclass(frozen=True)
class StageOneEstimator:
    """A stage-1 strategy.

    ``synthetic`` ignores the outcomes and returns the truth with
    ``error_budget`` planted mistakes (``None`` means floor(k / ln n)), split as
    evenly as possible between false positives and false negatives.  It stands
    in for an estimator meeting the ||tau - sigma||_1 <= k / ln n contract.
    """

    name: str
    threshold: int = 1
    error_budget: int | None = None

    def __post_init__(self):
        if self.name not in ESTIMATORS:
            raise InvalidParameterError(f"unknown estimator {self.name!r}; valid: {', '.join(ESTIMATORS)}")
        if self.threshold < 1:
            raise InvalidParameterError("threshold must be >= 1")
        if self.error_budget is not None and self.error_budget < 0:
            raise InvalidParameterError("error_budget must be >= 0")

    @classmethod
    def parse(cls, text: str) -> "StageOneEstimator":
        """Parse ``comp``, ``dd``, ``scored_dd:<t>``, ``synthetic`` or ``synthetic:<e>``."""
        name, _, arg = text.strip().partition(":")
        try:
            value = int(arg) if arg else None
        except ValueError:
            raise InvalidParameterError(f"bad estimator argument in {text!r}") from None
        if name == "scored_dd":
            return cls(name, threshold=value or 1)
        if name == "synthetic":
            return cls(name, error_budget=value)
        if value is not None:
            raise InvalidParameterError(f"estimator {name!r} takes no argument")
        return cls(name)

    @property
    def label(self) -> str:
        if self.name == "scored_dd":
            return f"scored_dd:{self.threshold}"
        if self.name == "synthetic" and self.error_budget is not None:
            return f"synthetic:{self.error_budget}"
        return self.name

    @property
    def reads_outcomes(self) -> bool:
        return self.name != "synthetic"

    def estimate(
        self,
        design: PoolingDesign | None,
        outcomes: TestOutcomes | None,
        truth: GroundTruth,
        rng: np.random.Generator,
    ) -> Estimate:
        if self.name == "comp":
            return comp_decode(design, outcomes)
        if self.name in ("dd", "scored_dd"):
            return scored_dd(design, outcomes, self.threshold)
        budget = self.error_budget
        if budget is None:
            budget = math.floor(truth.k / math.log(truth.n))
        return plant_errors(truth, budget, rng)


def plant_errors(truth: GroundTruth, errors: int, rng: np.random.Generator) -> Estimate:
    """Copy of the truth with ``errors`` coordinates flipped (capped at n).

    False negatives get ``errors // 2`` flips, false positives the rest; if
    one side runs out of individuals the other side takes the remainder.
    """
    n, k = truth.n, truth.k
    errors = min(errors, n)
    fn = min(errors // 2, k)
    fp = min(errors - fn, n - k)
    fn = errors - fp
    calls = truth.sigma.copy()
    if fn:
        calls[rng.choice(truth.infected, size=fn, replace=False)] = False
    if fp:
        healthy = np.flatnonzero(~truth.sigma)
        calls[rng.choice(healthy, size=fp, replace=False)] = True
    return Estimate(calls, f"synthetic:{errors}")


@dataclass(frozen=True)
class TrialRecord:
    n: int
    theta: float | None
    k: int
    seed: int | None
    pipeline: str
    estimator: str
    stage1_tests: int
    stage2a_tests: int
    stage2b_tests: int
    total_tests: int
    stage1_error: int
    v1tau_size: int
    kprime: int
    success: bool
    wall_time: float = field(default=0.0, compare=False)
    comp_exact: bool | None = None
    comp_overflow: bool = False

    def __post_init__(self):
        if self.total_tests != self.stage1_tests + self.stage2a_tests + self.stage2b_tests:
            raise ValueError("total_tests must equal the sum of the stage counts")


@dataclass(frozen=True, eq=False)
class AspivRun:
    """A trial record plus the call vectors behind it."""

    record: TrialRecord
    truth: GroundTruth
    stage1: Estimate
    after_stage2a: np.ndarray
    final: Estimate


@dataclass(frozen=True)
class CorollaryCheck:
    name: str
    passed: bool
    observed: int
    limit: int


def _resolve_k(n: int, theta: float | None, k: int | None) -> int:
    if k is None:
        if theta is None:
            raise InvalidParameterError("give theta or k")
        return k_from_theta(n, theta)
    if not 0 <= k < n:
        raise InvalidParameterError(f"need 0 <= k < n, got k={k}, n={n}")
    return k


def _seed_of(rng) -> int | None:
    return rng if isinstance(rng, int) else None


def run_aspiv_detailed(
    n: int,
    theta: float | None,
    epsilon: float,
    estimator: StageOneEstimator,
    stage1_budget: int,
    rng: np.random.Generator | int,
    *,
    k: int | None = None,
) -> AspivRun:
    if epsilon <= 0:
        raise InvalidParameterError(f"epsilon must be positive, got {epsilon}")
    if stage1_budget < 1:
        raise InvalidParameterError(f"stage1_budget must be >= 1, got {stage1_budget}")
    k = _resolve_k(n, theta, k)
    if k < 1:
        raise InvalidParameterError("the two-stage pipeline needs k >= 1")
    seed = _seed_of(rng)
    rng = ensure_rng(rng)
    started = time.perf_counter()
    log_n = math.log(n)

    truth = sample_ground_truth(n, k, rng, theta)
    if estimator.reads_outcomes:
        design1 = constant_column_design(n, stage1_budget, tuned_delta(stage1_budget, k), rng)
        tau = estimator.estimate(design1, evaluate_tests(design1, truth), truth, rng)
    else:
        # the budget is charged even though no outcome is read
        tau = estimator.estimate(None, None, truth, rng)
    stage1_error = hamming_distance(tau, truth)

    calls = tau.calls.copy()
    suspects = np.flatnonzero(calls)
    cleared = np.flatnonzero(~calls)

    # stage 2a: one test per suspected infected individual
    design2a = individual_design(suspects, n)
    calls[suspects] = evaluate_tests(design2a, truth).positive
    after_2a = calls.copy()

    # stage 2b: COMP on the suspected healthy, tuned for at most ceil(k / ln n) infected
    stage2b_tests = 0
    comp_exact = None
    overflow = False
    sub = truth.restrict(cleared)
    if cleared.size:
        stage2b_tests = bounds.stage2b_budget(k, epsilon)
        k_upper = max(1, math.ceil(k / log_n))
        design2b = constant_column_design(cleared.size, stage2b_tests, tuned_delta(stage2b_tests, k_upper), rng)
        sub_calls = comp_decode(design2b, evaluate_tests(design2b, sub)).calls
        calls[cleared] = sub_calls
        comp_exact = bool(np.array_equal(sub_calls, sub.sigma))
        overflow = int(sub_calls.sum()) > k * (1 + log_n)

    record = TrialRecord(
        n=n,
        theta=theta,
        k=k,
        seed=seed,
        pipeline="aspiv",
        estimator=estimator.label,
        stage1_tests=stage1_budget,
        stage2a_tests=design2a.m,
        stage2b_tests=stage2b_tests,
        total_tests=stage1_budget + design2a.m + stage2b_tests,
        stage1_error=stage1_error,
        v1tau_size=int(suspects.size),
        kprime=sub.k,
        success=bool(np.array_equal(calls, truth.sigma)) and not overflow,
        wall_time=time.perf_counter() - started,
        comp_exact=comp_exact,
        comp_overflow=overflow,
    )
    return AspivRun(record, truth, tau, after_2a, Estimate(calls, f"aspiv[{estimator.label}]"))


def run_aspiv(
    n: int,
    theta: float | None,
    epsilon: float,
    estimator: StageOneEstimator,
    stage1_budget: int,
    rng: np.random.Generator | int,
    *,
    k: int | None = None,
) -> TrialRecord:
    """One trial of the two-stage pipeline; see ``run_aspiv_detailed``."""
    return run_aspiv_detailed(n, theta, epsilon, estimator, stage1_budget, rng, k=k).record


def check_corollaries(record: TrialRecord, n: int, k: int) -> list[CorollaryCheck]:
    """Compare a run against |V1(tau)| <= k + ceil(k/ln n) and k' <= ceil(k/ln n).

    A failure means the stage-1 estimator fell outside its error contract on
    that run; nothing is raised.
    """
    slack = math.ceil(k / math.log(n))
    return [
        CorollaryCheck("v1tau_size", record.v1tau_size <= k + slack, record.v1tau_size, k + slack),
        CorollaryCheck("kprime", record.kprime <= slack, record.kprime, slack),
    ]


@lru_cache(maxsize=64)
def _auto_group_size(n: int, k: int) -> int:
    return optimal_dorfman_group_size(n, k)


@lru_cache(maxsize=8)
def _partition(n: int, group_size: int) -> PoolingDesign:
    # designs are immutable, so sweeps may share one per group size
    return dorfman_partition(n, group_size)


def run_dorfman(
    n: int,
    theta: float | None,
    group_size: int | str | None,
    rng: np.random.Generator | int,
    *,
    k: int | None = None,
) -> TrialRecord:
    """Dorfman's scheme: pool disjoint groups, then retest members of positive pools."""
    k = _resolve_k(n, theta, k)
    if group_size in (None, "auto"):
        group_size = _auto_group_size(n, k)
    seed = _seed_of(rng)
    rng = ensure_rng(rng)
    started = time.perf_counter()

    truth = sample_ground_truth(n, k, rng, theta)
    design1 = _partition(n, group_size)
    tau = comp_decode(design1, evaluate_tests(design1, truth))
    suspects = np.flatnonzero(tau.calls)
    design2 = individual_design(suspects, n)
    calls = np.zeros(n, dtype=bool)
    calls[suspects] = evaluate_tests(design2, truth).positive

    return TrialRecord(
        n=n,
        theta=theta,
        k=k,
        seed=seed,
        pipeline="dorfman",
        estimator=f"group_size={group_size}",
        stage1_tests=design1.m,
        stage2a_tests=design2.m,
        stage2b_tests=0,
        total_tests=design1.m + design2.m,
        stage1_error=hamming_distance(tau, truth),
        v1tau_size=int(suspects.size),
        kprime=int(np.count_nonzero(truth.sigma & ~tau.calls)),
        success=bool(np.array_equal(calls, truth.sigma)),
        wall_time=time.perf_counter() - started,
    )


def run_one_stage(
    n: int,
    theta: float | None,
    decoder: StageOneEstimator,
    budget: int,
    rng: np.random.Generator | int,
    *,
    k: int | None = None,
) -> TrialRecord:
    """A single non-adaptive round on a tuned constant-column design."""
    if decoder.name not in DECODERS:
        raise InvalidParameterError(f"one_stage needs a real decoder; valid: {', '.join(DECODERS)}")
    if budget < 1:
        raise InvalidParameterError(f"budget must be >= 1, got {budget}")
    k = _resolve_k(n, theta, k)
    seed = _seed_of(rng)
    rng = ensure_rng(rng)
    started = time.perf_counter()

    truth = sample_ground_truth(n, k, rng, theta)
    design = constant_column_design(n, budget, tuned_delta(budget, k), rng)
    tau = decoder.estimate(design, evaluate_tests(design, truth), truth, rng)
    error = hamming_distance(tau, truth)
    return TrialRecord(
        n=n,
        theta=theta,
        k=k,
        seed=seed,
        pipeline="one_stage",
        estimator=decoder.label,
        stage1_tests=budget,
        stage2a_tests=0,
        stage2b_tests=0,
        total_tests=budget,
        stage1_error=error,
        v1tau_size=int(tau.calls.sum()),
        kprime=int(np.count_nonzero(truth.sigma & ~tau.calls)),
        success=error == 0,
        wall_time=time.perf_counter() - started,
    )
