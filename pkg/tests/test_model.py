import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

import naive
from grouptest.designs import bernoulli_design, constant_column_design
from grouptest.errors import InvalidParameterError, ModelViolationError
from grouptest.model import (
    Estimate,
    GroundTruth,
    PoolingDesign,
    TestOutcomes,
    classify_vsets,
    evaluate_tests,
    hamming_distance,
    k_from_theta,
    sample_ground_truth,
)


def test_sample_ground_truth_extremes(rng):
    assert sample_ground_truth(5, 0, rng).infected.tolist() == []
    assert sample_ground_truth(5, 5, rng).infected.tolist() == [0, 1, 2, 3, 4]
    with pytest.raises(InvalidParameterError):
        sample_ground_truth(5, 6, rng)


def test_sample_ground_truth_deterministic():
    a = sample_ground_truth(1000, 30, np.random.default_rng(5))
    b = sample_ground_truth(1000, 30, np.random.default_rng(5))
    assert np.array_equal(a.infected, b.infected)
    assert a.k == 30 and len(set(a.infected.tolist())) == 30


def test_sample_ground_truth_uniform_inclusion():
    n, k, reps = 10**4, 100, 10**4
    rng = np.random.default_rng(0)
    counts = np.zeros(n, dtype=np.int64)
    for _ in range(reps):
        counts[sample_ground_truth(n, k, rng).infected] += 1
    freq = counts / reps
    p = k / n
    z = np.abs(freq - p) / np.sqrt(p * (1 - p) / reps)
    # 10**4 indices: about 0.63 of them exceed 4 SE under exact uniformity
    expected_outside = n * 2 * stats.norm.sf(4)
    assert np.count_nonzero(z > 4) <= stats.poisson.ppf(1 - 1e-4, expected_outside)
    assert z.max() < 5.5
    # goodness of fit of the pooled counts to the uniform law
    assert stats.chisquare(counts).pvalue > 1e-3


def test_k_from_theta():
    assert k_from_theta(10**6, 0.5) == 1000
    assert k_from_theta(10**6, 0.3) == 63
    assert k_from_theta(10, 0.01) == 1
    with pytest.raises(InvalidParameterError):
        k_from_theta(100, 1.0)


def test_ground_truth_validation():
    with pytest.raises(InvalidParameterError):
        GroundTruth(3, [0, 0])
    with pytest.raises(InvalidParameterError):
        GroundTruth(3, [3])
    t = GroundTruth.from_sigma([0, 1, 1, 0])
    assert t.infected.tolist() == [1, 2] and t.n == 4


def test_evaluate_tests_examples(toy, toy_exonerated):
    design, truth = toy
    assert evaluate_tests(design, truth).positive.tolist() == [True, False]
    design, truth = toy_exonerated
    assert evaluate_tests(design, truth).positive.tolist() == [True, False]
    assert not evaluate_tests(design, GroundTruth(2, [])).positive.any()


def test_evaluate_tests_size_mismatch(toy):
    design, _ = toy
    with pytest.raises(InvalidParameterError):
        evaluate_tests(design, GroundTruth(4, [0]))


def test_empty_tests_are_negative_and_flagged():
    design = PoolingDesign.from_tests(3, [[0], [], [1, 2]])
    assert design.empty_tests.tolist() == [1]
    assert evaluate_tests(design, GroundTruth(3, [0, 1, 2])).positive.tolist() == [True, False, True]


def test_duplicate_memberships_collapse():
    design = PoolingDesign.from_tests(3, [[0, 0, 1], [2, 2]])
    assert [t.tolist() for t in design.tests] == [[0, 1], [2]]
    assert [m.tolist() for m in design.memberships] == [[0], [0], [1]]


def test_classify_vsets_examples(toy):
    design, truth = toy
    part = classify_vsets(design, truth, evaluate_tests(design, truth))
    assert part.v1_minus == {0} and part.v0_plus == {1} and part.v0_minus == {2} and part.v1_plus == set()

    both = PoolingDesign.from_tests(2, [[0, 1]])
    truth = GroundTruth(2, [0, 1])
    assert classify_vsets(both, truth, evaluate_tests(both, truth)).v1_plus == {0, 1}


def test_classify_vsets_no_infected_and_isolated():
    design = PoolingDesign.from_tests(4, [[0, 1], [1]])
    truth = GroundTruth(4, [])
    part = classify_vsets(design, truth, evaluate_tests(design, truth))
    assert part.v0_minus == {0, 1}
    assert part.v0_plus == {2, 3}
    isolated_infected = GroundTruth(4, [3])
    part = classify_vsets(design, isolated_infected, evaluate_tests(design, isolated_infected))
    assert part.v1_plus == {3}


def test_classify_vsets_rejects_inconsistent_outcomes(toy):
    design, truth = toy
    with pytest.raises(ModelViolationError):
        classify_vsets(design, truth, TestOutcomes([False, False]))


def test_hamming_distance():
    truth = GroundTruth(6, [1, 4])
    assert hamming_distance(Estimate(truth.sigma), truth) == 0
    assert hamming_distance(Estimate(~truth.sigma), truth) == 6
    one = truth.sigma.copy()
    one[0] = True
    assert hamming_distance(Estimate(one), truth) == 1
    with pytest.raises(InvalidParameterError):
        hamming_distance(Estimate(np.zeros(5, dtype=bool)), truth)


instances = st.builds(
    lambda seed: naive.random_instance(np.random.default_rng(seed), n_max=60),
    st.integers(0, 2**32 - 1),
)


@given(instances)
def test_outcomes_and_vsets_match_definitions(inst):
    design, truth = inst
    tests = naive.tests_as_sets(design)
    infected = set(truth.infected.tolist())
    out = evaluate_tests(design, truth)
    assert out.positive.tolist() == naive.outcomes(tests, infected)
    part = classify_vsets(design, truth, out)
    assert (part.v0_minus, part.v0_plus, part.v1_minus, part.v1_plus) == naive.vsets(truth.n, tests, infected)
    # P1: a partition of all individuals
    sets = [part.v0_minus, part.v0_plus, part.v1_minus, part.v1_plus]
    assert sum(map(len, sets)) == truth.n == len(set().union(*sets))


@given(instances, st.integers(0, 2**32 - 1))
def test_outcome_monotonicity(inst, seed):
    design, truth = inst
    healthy = np.flatnonzero(~truth.sigma)
    if healthy.size == 0:
        return
    extra = np.random.default_rng(seed).choice(healthy)
    bigger = GroundTruth(truth.n, np.append(truth.infected, extra))
    before = evaluate_tests(design, truth).positive
    after = evaluate_tests(design, bigger).positive
    assert np.all(after[before])


@given(instances)
def test_transpose_roundtrip(inst):
    design, _ = inst
    rebuilt = PoolingDesign.from_tests(design.n, [t.tolist() for t in design.tests])
    assert rebuilt == design
    for a, members in enumerate(design.tests):
        for x in members:
            assert a in design.tests_of(int(x))


def test_validation_rejects_unsorted_rows():
    with pytest.raises(InvalidParameterError):
        PoolingDesign(2, 3, np.array([0, 2, 3]), np.array([2, 1, 0]))
    with pytest.raises(InvalidParameterError):
        PoolingDesign(2, 3, np.array([0, 2, 3]), np.array([1, 1, 0]))
    ok = PoolingDesign(2, 3, np.array([0, 2, 3]), np.array([1, 2, 0]))
    assert ok.tests_of(0).tolist() == [1, 2]


def test_design_arrays_are_read_only(rng):
    design = bernoulli_design(20, 5, 0.3, rng)
    with pytest.raises(ValueError):
        design.member_idx[0] = 0
    with pytest.raises(ValueError):
        constant_column_design(5, 4, 2, rng).member_ptr[0] = 1
