"""Command-line front end"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from app.application.use_cases.price_scenario import (
    CONVERGENCE,
    FORMATS,
    VALIDATION,
    PriceScenarioRequest,
)
from app.application.use_cases.verify_engine import CheckResult, VerifyEngineRequest
from app.container import get_container
from app.core.entities.scenario import MODES
from app.core.errors import ValidationError
from app.infrastructure.environment import load_environment
from app.version import __version__

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3

_EXIT_CODES = {VALIDATION: EXIT_VALIDATION, CONVERGENCE: EXIT_CONVERGENCE}

VERIFY_PATHS = 20000
VERIFY_STEPS = 64


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xvaforge",
        description="Price a scenario file with funding, collateral and default adjustments.",
    )
    parser.add_argument("--scenario", type=Path, help="scenario JSON file")
    parser.add_argument("--mode", choices=MODES, help="override the scenario's run mode")
    parser.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    parser.add_argument("--steps", type=int, help="number of time steps")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--format", choices=FORMATS, default="json", dest="output_format")
    parser.add_argument("--verify", action="store_true", help="run the verification matrix")
    parser.add_argument("--workers", type=int, help="threads used for path generation")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def format_table(results: Sequence[CheckResult]) -> str:
    """Fixed-width pass/fail table of verification rows"""
    width = max([len(r.name) for r in results] + [5])
    lines = [f"{'check':<24} {'name':<{width}} {'value':>12} {'threshold':>12}  result"]
    lines.append("-" * len(lines[0]))
    for r in results:
        lines.append(
            f"{r.check:<24} {r.name:<{width}} {r.value:>12.4e} {r.threshold:>12.4e}  "
            f"{'PASS' if r.passed else 'FAIL'}"
        )
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)


def _verify(args: argparse.Namespace, workers: int) -> int:
    container = get_container(workers)
    response = container.verify_engine_use_case.execute(
        VerifyEngineRequest(
            paths=args.paths or VERIFY_PATHS,
            steps=args.steps or VERIFY_STEPS,
            seed=args.seed if args.seed is not None else VerifyEngineRequest.seed,
            workers=workers,
        )
    )
    if not response.success:
        print(f"error: {response.error}", file=sys.stderr)
        return _EXIT_CODES.get(response.error_kind, EXIT_FAILURE)
    print(format_table(response.results))
    return EXIT_OK if response.all_passed else EXIT_FAILURE


def _price(args: argparse.Namespace, workers: int, out_dir: Path) -> int:
    container = get_container(workers)
    response = container.price_scenario_use_case.execute(
        PriceScenarioRequest(
            scenario_path=args.scenario,
            out_dir=out_dir,
            mode=args.mode,
            paths=args.paths,
            steps=args.steps,
            seed=args.seed,
            workers=workers,
            output_format=args.output_format,
        )
    )
    if not response.success:
        print(f"error: {response.error}", file=sys.stderr)
        return _EXIT_CODES.get(response.error_kind, EXIT_FAILURE)

    for report in response.reports:
        print(f"{report.method:<16} price {report.price: .6f}  (se {report.standard_error:.2e})")
    for warning in response.warnings:
        print(f"warning: {warning}")
    for path in response.files:
        print(f"wrote {path}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        env = load_environment()
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION

    level = (args.log_level or env.log_level).upper()
    if not isinstance(logging.getLevelName(level), int):
        print(f"error: unknown log level '{level}'", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=level, format=LOG_FORMAT)

    workers = args.workers if args.workers is not None else env.workers
    if workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION

    if args.verify or args.mode == "verify":
        return _verify(args, workers)
    if args.scenario is None:
        print("error: --scenario is required unless --verify is given", file=sys.stderr)
        return EXIT_VALIDATION
    return _price(args, workers, args.out or env.output_dir)


if __name__ == "__main__":
    sys.exit(main())
