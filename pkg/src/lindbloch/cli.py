"""Command-line entry point: ``lindbloch run SCENARIO --method M``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import IntegrationDivergedError, LindblochError
from .runner import run
from .scenario import METHODS, ScenarioError, parse_scenario

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lindbloch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="evaluate a scenario file")
    p.add_argument("scenario", type=Path)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--seed", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--order", type=int)
    p.add_argument("--trajectories", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scenario = parse_scenario(args.scenario.read_text())
        scenario = scenario.with_overrides(method=args.method, dt=args.dt, order=args.order,
                                           seed=args.seed, trajectories=args.trajectories)
        passed = run(scenario, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ScenarioError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except IntegrationDivergedError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LindblochError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if not passed:
        print(f"comparison FAIL; see {args.out / (scenario.name + '.report')}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
