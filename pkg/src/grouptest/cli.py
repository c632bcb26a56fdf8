"""Command-line entry point.

Exit codes: 0 success, 2 invalid parameters, 3 I/O error, 4 oracle cap hit.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import bounds
from .adaptive import ESTIMATORS
from .decoders import ENUMERATION_CAP, map_margins
from .errors import InvalidParameterError, ModelViolationError, ResourceLimitError
from .harness import (
    CSV_FIELDS,
    PIPELINES,
    ExperimentConfig,
    _csv_text,
    load_config,
    record_row,
    run_sweep,
    run_trial,
)
from .model import PoolingDesign, TestOutcomes

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_RESOURCE = 0, 2, 3, 4


def _group_size(text: str):
    if text == "auto":
        return 0
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("group size must be an integer or 'auto'") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grouptest", description="Group testing simulations and test-count bounds.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="print closed-form test counts")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--k", type=int, help="override k = round(n^theta)")
    p.add_argument("--json", action="store_true", help="emit JSON instead of key = value lines")

    p = sub.add_parser("simulate", help="run one trial and print it as a CSV row")
    p.add_argument("--pipeline", choices=PIPELINES, default="aspiv")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--theta", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--estimator", default="dd", help=f"one of {', '.join(ESTIMATORS)}; scored_dd:<t>, synthetic:<e>")
    budget = p.add_mutually_exclusive_group()
    budget.add_argument("--m-factor", type=float, help="stage-1 budget as a multiple of m_inf (default 1.2)")
    budget.add_argument("--m-budget", type=int, help="stage-1 budget in tests")
    p.add_argument("--group-size", type=_group_size, default=0, help="Dorfman group size or 'auto'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("sweep", help="run a sweep described by a JSON config file")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, help="worker processes (default: $GROUPTEST_WORKERS or 1)")

    p = sub.add_parser("margins", help="exact posterior marginals for a small instance")
    p.add_argument("--instance", required=True, help='JSON file with "n", "k", "tests" and "positive"')
    p.add_argument("--cap", type=int, default=ENUMERATION_CAP)
    return parser


def _cmd_bounds(args) -> int:
    report = bounds.bound_report(args.n, args.theta, args.k)
    if args.json:
        print(json.dumps(report.as_dict(), indent=2))
        return EXIT_OK
    for key, value in report.as_dict().items():
        print(f"{key} = {value:.2f}" if isinstance(value, float) and key != "theta" else f"{key} = {value}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    if args.pipeline == "dorfman":
        grid, mode = args.group_size, "factor"
    elif args.m_budget is not None:
        grid, mode = args.m_budget, "absolute"
    else:
        grid, mode = args.m_factor or 1.2, "factor"
    config = ExperimentConfig(
        n=args.n,
        theta=args.theta,
        k=args.k,
        epsilon=args.epsilon,
        pipeline=args.pipeline,
        estimator=args.estimator,
        m_grid=[grid],
        budget_mode=mode,
        trials=1,
        master_seed=args.seed,
    )
    row = record_row(0, run_trial(config, grid, 0))
    if args.format == "json":
        print(json.dumps(row))
    else:
        sys.stdout.write(_csv_text(CSV_FIELDS, [row]))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    result = run_sweep(config, workers=args.workers)
    for path in result.output_paths:
        print(path)
    return EXIT_OK


def _cmd_margins(args) -> int:
    with open(args.instance) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidParameterError(f"{args.instance}: not valid JSON ({exc})") from None
    try:
        design = PoolingDesign.from_tests(int(data["n"]), data["tests"])
        outcomes = TestOutcomes(data["positive"])
        k = int(data["k"])
    except (KeyError, TypeError) as exc:
        raise InvalidParameterError(f"{args.instance}: malformed instance ({exc})") from None
    table = map_margins(design, outcomes, k, cap=args.cap)
    print(json.dumps({"support_count": table.support_count, "marginal": table.marginal.tolist()}))
    return EXIT_OK


COMMANDS = {"bounds": _cmd_bounds, "simulate": _cmd_simulate, "sweep": _cmd_sweep, "margins": _cmd_margins}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InvalidParameterError, ModelViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def main():
    sys.exit(cli_main())
