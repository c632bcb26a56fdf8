"""Closed-form test counts.

All "log n" terms are natural logarithms; the constants 1/ln 2 and 1/ln^2 2
carry the base conversion.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln

from .errors import InvalidParameterError

LN2 = math.log(2)
LN2_SQ = LN2 * LN2


def _check(n, theta):
    if not 0 < theta < 1:
        raise InvalidParameterError(f"theta must lie in (0, 1), got {theta}")
    if n < 2:
        raise InvalidParameterError(f"n must be at least 2, got {n}")


def one_stage_crossover() -> float:
    """Exponent where the two terms of ``m_one_stage`` coincide."""
    return LN2 / (1 + LN2)


def m_inf(n: float, theta: float) -> float:
    """Universal counting lower bound (1 - theta)/ln2 * n^theta * ln n."""
    _check(n, theta)
    return (1 - theta) / LN2 * n**theta * math.log(n)


def m_one_stage(n: float, theta: float) -> float:
    _check(n, theta)
    rate = max((1 - theta) / LN2, theta / LN2_SQ)
    return rate * n**theta * math.log(n)


def mezard_bound(n: float, theta: float) -> float:
    """Two-stage threshold for algorithms that only test disguised individuals again."""
    return m_inf(n, theta) / LN2


def _log_binom(n, k):
    return gammaln(np.asarray(n, dtype=float) + 1) - gammaln(np.asarray(k, dtype=float) + 1) - gammaln(np.asarray(n, dtype=float) - k + 1)


def counting_bound(n: int, k: int) -> float:
    """log2 C(n, k), via log-gamma."""
    if not 0 <= k <= n:
        raise InvalidParameterError(f"need 0 <= k <= n, got k={k}, n={n}")
    return float(_log_binom(n, k)) / LN2


def _positive_group_prob(n, k, sizes):
    # P(group of size s has an infected member) = 1 - C(n-s, k)/C(n, k)
    sizes = np.asarray(sizes, dtype=float)
    out = np.ones_like(sizes)
    ok = n - sizes >= k
    if k == 0:
        return np.zeros_like(sizes)
    log_ratio = _log_binom(n - sizes[ok], k) - _log_binom(n, k)
    out[ok] = -np.expm1(log_ratio)
    return out


def dorfman_expected_curve(n: int, k: int, sizes) -> np.ndarray:
    """Exact expected Dorfman test counts for an array of group sizes."""
    sizes = np.asarray(sizes, dtype=np.int64)
    full, rem = np.divmod(n, sizes)
    groups = full + (rem > 0)
    stage2 = full * sizes * _positive_group_prob(n, k, sizes)
    has_rem = rem > 0
    stage2[has_rem] += rem[has_rem] * _positive_group_prob(n, k, rem[has_rem])
    return groups + stage2


def dorfman_expected_tests(n: int, k: int, group_size: int) -> float:
    """Expected total tests of Dorfman's scheme with consecutive groups of ``group_size``."""
    if not 1 <= group_size <= n:
        raise InvalidParameterError(f"need 1 <= group_size <= n, got {group_size}")
    if not 0 <= k <= n:
        raise InvalidParameterError(f"need 0 <= k <= n, got k={k}, n={n}")
    return float(dorfman_expected_curve(n, k, [group_size])[0])


def comp_budget(n: float, k_upper: float, epsilon: float) -> int:
    """Tests for COMP to succeed with at most ``k_upper`` infected among ``n``."""
    if epsilon < 0 or k_upper < 0:
        raise InvalidParameterError("epsilon and k_upper must be non-negative")
    if k_upper == 0:
        return 0
    return math.ceil((1 + epsilon) * k_upper * math.log(n) / LN2_SQ)


def stage2b_budget(k: int, epsilon: float) -> int:
    """COMP budget of the second stage, (1 + eps) k / ln^2 2 rounded up."""
    return math.ceil((1 + epsilon) * k / LN2_SQ)


@dataclass(frozen=True)
class BoundReport:
    n: int
    theta: float
    k: int
    m_inf: float
    m_one_stage: float
    m_mezard: float
    m_counting: float
    m_dorfman_expected: float
    dorfman_group_size: int

    def as_dict(self) -> dict:
        return asdict(self)


def bound_report(n: int, theta: float, k: int | None = None) -> BoundReport:
    from .designs import optimal_dorfman_group_size
    from .model import k_from_theta

    if k is None:
        k = k_from_theta(n, theta)
    s = optimal_dorfman_group_size(n, k)
    return BoundReport(
        n=n,
        theta=theta,
        k=k,
        m_inf=m_inf(n, theta),
        m_one_stage=m_one_stage(n, theta),
        m_mezard=mezard_bound(n, theta),
        m_counting=counting_bound(n, k),
        m_dorfman_expected=dorfman_expected_tests(n, k, s),
        dorfman_group_size=s,
    )
