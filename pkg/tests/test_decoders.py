import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import naive
from grouptest.decoders import (
    comp_decode,
    consistent_configurations,
    dd_decode,
    map_margins,
    scored_dd,
    unexplained_fraction,
)
from grouptest.designs import constant_column_design, tuned_delta
from grouptest.errors import InvalidParameterError, ModelViolationError, ResourceLimitError
from grouptest.model import GroundTruth, PoolingDesign, TestOutcomes, classify_vsets, evaluate_tests, sample_ground_truth


def _calls(est):
    return naive.as_set(est.calls)


def test_comp_examples(toy, toy_exonerated):
    design, truth = toy
    out = evaluate_tests(design, truth)
    assert _calls(comp_decode(design, out)) == {0, 1}
    assert classify_vsets(design, truth, out).v0_plus == {1}

    design, truth = toy_exonerated
    assert _calls(comp_decode(design, evaluate_tests(design, truth))) == {0}

    negative = PoolingDesign.from_tests(4, [[0, 1], [2]])
    assert _calls(comp_decode(negative, TestOutcomes([False, False]))) == {3}  # 3 is in no test


def test_dd_examples(toy, toy_exonerated):
    design, truth = toy_exonerated
    assert _calls(dd_decode(design, evaluate_tests(design, truth))) == {0}
    design, truth = toy
    assert _calls(dd_decode(design, evaluate_tests(design, truth))) == set()
    assert _calls(dd_decode(design, TestOutcomes([False, False]))) == set()


def test_scored_dd_threshold_example():
    tests = [[0, 2], [0, 3], [0, 4], [0, 1], [0, 1], [2, 3, 4]]
    design = PoolingDesign.from_tests(5, tests)
    truth = GroundTruth(5, [0, 1])
    out = evaluate_tests(design, truth)
    assert 0 in _calls(scored_dd(design, out, 3))
    assert 0 not in _calls(scored_dd(design, out, 4))
    with pytest.raises(InvalidParameterError):
        scored_dd(design, out, 0)


instances = st.builds(
    lambda seed: naive.random_instance(np.random.default_rng(seed), n_max=80),
    st.integers(0, 2**32 - 1),
)


@given(instances)
def test_decoders_match_reference(inst):
    design, truth = inst
    tests = naive.tests_as_sets(design)
    out = evaluate_tests(design, truth)
    pos = out.positive.tolist()
    n = truth.n
    assert _calls(comp_decode(design, out)) == naive.comp(n, tests, pos)
    for t in (1, 2, 3):
        assert _calls(scored_dd(design, out, t)) == naive.scored_dd(n, tests, pos, t)


@given(instances)
def test_comp_and_dd_invariants(inst):
    design, truth = inst
    out = evaluate_tests(design, truth)
    part = classify_vsets(design, truth, out)
    infected = set(truth.infected.tolist())
    comp = _calls(comp_decode(design, out))
    dd = _calls(dd_decode(design, out))
    assert comp >= infected  # C1
    assert comp == infected | part.v0_plus  # C2
    assert dd <= part.v1_minus <= infected  # C3
    assert np.array_equal(scored_dd(design, out, 1).calls, dd_decode(design, out).calls)
    previous = dd
    for t in range(2, 6):  # C5
        current = _calls(scored_dd(design, out, t))
        assert current <= previous
        previous = current


def test_unexplained_fraction_examples():
    design = PoolingDesign.from_tests(4, [[0, 1], [0, 2], [0]])
    lone = GroundTruth(4, [0])
    assert unexplained_fraction(design, lone, evaluate_tests(design, lone), 0) == 1.0

    shared = PoolingDesign.from_tests(4, [[0, 1], [0, 1, 2]])
    truth = GroundTruth(4, [0, 1])
    assert unexplained_fraction(shared, truth, evaluate_tests(shared, truth), 0) == 0.0

    with pytest.raises(InvalidParameterError):
        unexplained_fraction(shared, truth, evaluate_tests(shared, truth), 2)
    with pytest.raises(InvalidParameterError):
        isolated = GroundTruth(4, [3])
        unexplained_fraction(shared, isolated, evaluate_tests(shared, isolated), 3)


def test_unexplained_fraction_tuned_design_small():
    # the analytic value (1 - delta/m)^(k-1) at a smaller size
    n, k, m = 2000, 20, 200
    delta = tuned_delta(m, k)
    rng = np.random.default_rng(4)
    values = []
    for _ in range(40):
        truth = sample_ground_truth(n, k, rng)
        design = constant_column_design(n, m, delta, rng)
        out = evaluate_tests(design, truth)
        values += [unexplained_fraction(design, truth, out, int(x)) for x in truth.infected]
    assert np.mean(values) == pytest.approx((1 - delta / m) ** (k - 1), abs=0.03)


def test_consistent_configurations_examples(toy):
    design, truth = toy
    out = evaluate_tests(design, truth)
    assert consistent_configurations(design, out, 1) == [(0,), (1,)]
    nothing = PoolingDesign.from_tests(4, [])
    assert consistent_configurations(nothing, TestOutcomes([]), 2) == [
        (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3),
    ]


def test_consistent_configurations_cap():
    design = PoolingDesign.from_tests(40, [])
    with pytest.raises(ResourceLimitError):
        consistent_configurations(design, TestOutcomes([]), 20)
    with pytest.raises(ResourceLimitError):
        map_margins(design, TestOutcomes([]), 3, cap=math.comb(40, 3) - 1)


small_instances = st.builds(
    lambda seed: naive.random_instance(np.random.default_rng(seed), n_max=12, k_max=4),
    st.integers(0, 2**32 - 1),
)


@given(small_instances)
def test_oracle_matches_brute_force(inst):
    design, truth = inst
    tests = naive.tests_as_sets(design)
    out = evaluate_tests(design, truth)
    configs = consistent_configurations(design, out, truth.k)
    assert configs == naive.consistent(truth.n, tests, out.positive.tolist(), truth.k)
    assert tuple(truth.infected.tolist()) in configs
    # C4: decoders of the right weight that explain the outcomes are listed
    for est in (comp_decode(design, out), dd_decode(design, out)):
        calls = tuple(est.infected.tolist())
        if len(calls) == truth.k and np.array_equal(
            evaluate_tests(design, GroundTruth(truth.n, list(calls))).positive, out.positive
        ):
            assert calls in configs


@given(small_instances)
def test_margins(inst):
    design, truth = inst
    out = evaluate_tests(design, truth)
    table = map_margins(design, out, truth.k)
    assert table.support_count == len(consistent_configurations(design, out, truth.k))
    if truth.k:
        assert table.marginal.sum() == pytest.approx(truth.k)
    cleared = ~comp_decode(design, out).calls
    assert np.all(table.marginal[cleared] == 0)


def test_margins_examples(toy, toy_exonerated):
    design, truth = toy
    table = map_margins(design, evaluate_tests(design, truth), 1)
    assert table.marginal.tolist() == [0.5, 0.5, 0.0]
    design, truth = toy_exonerated
    table = map_margins(design, evaluate_tests(design, truth), 1)
    assert table.support_count == 1 and table.marginal.tolist() == [1.0, 0.0]
    with pytest.raises(ModelViolationError):
        map_margins(design, TestOutcomes([False, True]), 1)
