"""Simulation of probabilistic group testing: designs, decoders, bounds and two-stage pipelines."""
from .adaptive import StageOneEstimator, TrialRecord, check_corollaries, run_aspiv, run_dorfman, run_one_stage
from .bounds import comp_budget, counting_bound, dorfman_expected_tests, m_inf, m_one_stage, mezard_bound
from .decoders import comp_decode, consistent_configurations, dd_decode, map_margins, scored_dd, unexplained_fraction
from .designs import (
    bernoulli_design,
    constant_column_design,
    dorfman_partition,
    individual_design,
    optimal_dorfman_group_size,
    tuned_delta,
)
from .errors import InvalidParameterError, ModelViolationError, ResourceLimitError
from .model import (
    Estimate,
    GroundTruth,
    PoolingDesign,
    TestOutcomes,
    VPartition,
    classify_vsets,
    evaluate_tests,
    hamming_distance,
    sample_ground_truth,
)

__version__ = "0.1.0"
