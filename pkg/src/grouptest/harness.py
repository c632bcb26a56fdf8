"""Monte-Carlo sweeps over stage-1 budgets (or Dorfman group sizes).

Trial ``t`` at every grid point draws from the stream seeded by
``derive_trial_seed(master_seed, t)``.  Grid points therefore share their
ground truths (common random numbers), which keeps curves over the grid
smooth, and the output never depends on how trials are scheduled.
"""
from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import io
import json
import logging
import math
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bounds
from .adaptive import (
    StageOneEstimator,
    TrialRecord,
    run_aspiv,
    run_dorfman,
    run_one_stage,
)
from .errors import InvalidParameterError
from .model import k_from_theta

log = logging.getLogger(__name__)

PIPELINES = ("aspiv", "dorfman", "one_stage")
BUDGET_MODES = ("factor", "absolute")
OUTPUT_FORMATS = ("csv", "json")
WORKERS_ENV = "GROUPTEST_WORKERS"
CSV_FIELDS = (
    "trial", "n", "theta", "k", "pipeline", "estimator",
    "stage1_tests", "stage2a_tests", "stage2b_tests", "total_tests",
    "stage1_error", "v1tau_size", "kprime", "success", "seed",
)
_U64 = (1 << 64) - 1
_SEED_PERSON = b"grouptest-trial"


def derive_trial_seed(master_seed: int, trial_index: int) -> int:
    """64-bit seed for one trial.

    BLAKE2b with an 8-byte digest and personalisation ``b"grouptest-trial"``
    over ``struct.pack("<QQ", master_seed mod 2**64, trial_index)``, read back
    as a little-endian unsigned integer.
    """
    if trial_index < 0:
        raise InvalidParameterError("trial_index must be non-negative")
    data = struct.pack("<QQ", master_seed & _U64, trial_index)
    digest = hashlib.blake2b(data, digest_size=8, person=_SEED_PERSON).digest()
    return int.from_bytes(digest, "little")


@dataclass
class ExperimentConfig:
    """Sweep parameters.

    ``m_grid`` holds stage-1 budgets: multipliers of m_inf when
    ``budget_mode`` is ``"factor"``, test counts when ``"absolute"``.  For the
    dorfman pipeline the entries are group sizes, 0 meaning the optimal size.
    """

    n: int
    theta: float | None = None
    k: int | None = None
    epsilon: float = 0.2
    pipeline: str = "aspiv"
    estimator: str = "dd"
    m_grid: list = field(default_factory=lambda: [1.2])
    budget_mode: str = "factor"
    trials: int = 1
    master_seed: int = 0
    output_path: str = "results.csv"
    output_format: str = "csv"

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidParameterError(f"unknown config keys {unknown}; valid keys: {sorted(known)}")
        if "n" not in data:
            raise InvalidParameterError("config needs 'n'")
        return cls(**data)

    def validate(self):
        if not isinstance(self.n, int) or self.n < 2:
            raise InvalidParameterError(f"n must be an integer >= 2, got {self.n!r}")
        if self.theta is None and self.k is None:
            raise InvalidParameterError("config needs theta or k")
        if self.pipeline not in PIPELINES:
            raise InvalidParameterError(f"unknown pipeline {self.pipeline!r}; valid: {', '.join(PIPELINES)}")
        if self.budget_mode not in BUDGET_MODES:
            raise InvalidParameterError(f"unknown budget_mode {self.budget_mode!r}; valid: {', '.join(BUDGET_MODES)}")
        if self.output_format not in OUTPUT_FORMATS:
            raise InvalidParameterError(f"unknown output_format {self.output_format!r}; valid: {', '.join(OUTPUT_FORMATS)}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise InvalidParameterError("trials must be an integer >= 1")
        if not self.m_grid:
            raise InvalidParameterError("m_grid must be non-empty")
        if self.pipeline == "dorfman":
            if any(v < 0 or v != int(v) for v in self.m_grid):
                raise InvalidParameterError("dorfman m_grid entries are group sizes (0 = optimal)")
        elif any(v <= 0 for v in self.m_grid):
            raise InvalidParameterError("m_grid entries must be positive")
        if self.epsilon <= 0:
            raise InvalidParameterError("epsilon must be positive")
        if self.pipeline != "dorfman":
            est = StageOneEstimator.parse(self.estimator)
            if self.pipeline == "one_stage" and est.name == "synthetic":
                raise InvalidParameterError("one_stage needs a real decoder: comp, dd or scored_dd")

    @property
    def resolved_k(self) -> int:
        if self.k is not None:
            return self.k
        return k_from_theta(self.n, self.theta)

    @property
    def effective_theta(self) -> float:
        """theta, or log k / log n when only k was given."""
        if self.theta is not None:
            return self.theta
        return math.log(max(self.k, 1)) / math.log(self.n)

    def stage1_budget(self, grid_value: float) -> int:
        if self.budget_mode == "absolute":
            return int(math.ceil(grid_value))
        return math.ceil(grid_value * bounds.m_inf(self.n, self.effective_theta))


@dataclass(frozen=True)
class GridPointSummary:
    grid_value: float
    stage1_tests: int
    trials: int
    successes: int
    success_rate: float
    success_se: float
    wilson_low: float
    wilson_high: float
    mean_total_tests: float
    se_total_tests: float
    mean_stage1_error: float
    se_stage1_error: float
    m_inf: float
    m_one_stage: float
    m_mezard: float


@dataclass(frozen=True)
class SweepSummary:
    points: list

    def as_rows(self) -> list[dict]:
        return [asdict(p) for p in self.points]


@dataclass(frozen=True)
class SweepResult:
    summary: SweepSummary
    records: list
    output_paths: tuple = ()


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def _mean_se(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    if a.size < 2:
        return float(a.mean()), 0.0
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


def summarize_point(config: ExperimentConfig, grid_value: float, records: list[TrialRecord]) -> GridPointSummary:
    successes = sum(r.success for r in records)
    trials = len(records)
    rate = successes / trials
    low, high = wilson_interval(successes, trials)
    mean_total, se_total = _mean_se([r.total_tests for r in records])
    mean_err, se_err = _mean_se([r.stage1_error for r in records])
    theta = config.effective_theta
    return GridPointSummary(
        grid_value=float(grid_value),
        stage1_tests=records[0].stage1_tests,
        trials=trials,
        successes=successes,
        success_rate=rate,
        success_se=math.sqrt(rate * (1 - rate) / trials),
        wilson_low=low,
        wilson_high=high,
        mean_total_tests=mean_total,
        se_total_tests=se_total,
        mean_stage1_error=mean_err,
        se_stage1_error=se_err,
        m_inf=bounds.m_inf(config.n, theta),
        m_one_stage=bounds.m_one_stage(config.n, theta),
        m_mezard=bounds.mezard_bound(config.n, theta),
    )


def run_trial(config: ExperimentConfig, grid_value: float, trial_index: int) -> TrialRecord:
    seed = derive_trial_seed(config.master_seed, trial_index)
    if config.pipeline == "dorfman":
        size = int(grid_value) or "auto"
        return run_dorfman(config.n, config.theta, size, seed, k=config.k)
    estimator = StageOneEstimator.parse(config.estimator)
    budget = config.stage1_budget(grid_value)
    if config.pipeline == "one_stage":
        return run_one_stage(config.n, config.theta, estimator, budget, seed, k=config.k)
    return run_aspiv(config.n, config.theta, config.epsilon, estimator, budget, seed, k=config.k)


def _run_task(args):
    return run_trial(*args)


def worker_count(requested: int | None = None) -> int:
    if requested is None:
        env = os.environ.get(WORKERS_ENV)
        requested = int(env) if env else 1
    return max(1, requested)


def record_row(trial: int, record: TrialRecord) -> dict:
    row = {name: getattr(record, name) for name in CSV_FIELDS if name != "trial"}
    row["trial"] = trial
    row["success"] = int(record.success)
    row["theta"] = "" if record.theta is None else record.theta
    return {name: row[name] for name in CSV_FIELDS}


def check_writable(path: str | os.PathLike):
    """Raise OSError unless ``path`` can be created or replaced."""
    target = Path(path)
    parent = target.parent if str(target.parent) else Path(".")
    if not parent.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {parent}")
    if target.is_dir():
        raise IsADirectoryError(f"output path is a directory: {target}")
    if not os.access(parent, os.W_OK):
        raise PermissionError(f"output directory is not writable: {parent}")


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(fieldnames, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def summary_path(output_path: str | os.PathLike) -> Path:
    p = Path(output_path)
    return p.with_name(p.stem + ".summary.csv")


def write_outputs(config: ExperimentConfig, result: SweepResult) -> tuple[Path, ...]:
    out = Path(config.output_path)
    rows = [record_row(t, r) for t, r in _indexed(config, result.records)]
    summary_rows = result.summary.as_rows()
    if config.output_format == "json":
        doc = {"config": asdict(config), "summary": summary_rows, "records": rows}
        _atomic_write(out, json.dumps(doc, indent=2) + "\n")
        return (out,)
    _atomic_write(out, _csv_text(CSV_FIELDS, rows))
    side = summary_path(out)
    _atomic_write(side, _csv_text([f.name for f in fields(GridPointSummary)], summary_rows))
    return out, side


def _indexed(config: ExperimentConfig, records):
    for i, r in enumerate(records):
        yield i % config.trials, r


def run_sweep(config: ExperimentConfig, workers: int | None = None, write: bool = True) -> SweepResult:
    """Run every (grid point, trial) pair, aggregate, and write the outputs."""
    config.validate()
    if write:
        check_writable(config.output_path)
        if config.output_format == "csv":
            check_writable(summary_path(config.output_path))
    tasks = [(config, g, t) for g in config.m_grid for t in range(config.trials)]
    workers = worker_count(workers)
    log.info("sweep: %d trials on %d worker(s)", len(tasks), workers)
    if workers > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(tasks) // (4 * workers))
            records = list(pool.map(_run_task, tasks, chunksize=chunk))
    else:
        records = [_run_task(t) for t in tasks]
    points = []
    for i, g in enumerate(config.m_grid):
        block = records[i * config.trials:(i + 1) * config.trials]
        points.append(summarize_point(config, g, block))
    result = SweepResult(SweepSummary(points), records)
    if write:
        paths = write_outputs(config, result)
        result = SweepResult(result.summary, result.records, paths)
    return result


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    """Read a JSON object of config keys."""
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise InvalidParameterError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_dict(data)
