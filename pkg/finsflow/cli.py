"""
Command-line entry point.

    python -m finsflow.cli run-all --config scenarios/flat-static.yaml --seed 7 --out runs
"""
import argparse
import logging
import sys

from finsflow.errors import ConfigurationError
from finsflow.runner import run_scenario

COMMANDS = {
    "check-identities": ("identities",),
    "estimate-constants": ("constants",),
    "run-heat-flow": ("heat_flow",),
    "verify-gradient-estimate": ("constants", "heat_flow", "gradient_estimate"),
    "verify-harnack": ("constants", "heat_flow", "harnack"),
    "run-all": ("constants", "identities", "heat_flow", "gradient_estimate", "harnack"),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="finsflow", description="Heat flow and gradient-estimate verification on evolving Finsler tori."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        sub.add_argument("--config", required=True, help="Scenario YAML file")
        sub.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
        sub.add_argument("--out", default=None, help="Output root directory")
        sub.add_argument("--threads", type=int, default=1, help="Worker threads for identity checks")
        sub.add_argument("--refinements", type=int, default=None, help="Refinement levels for convergence orders")
        sub.add_argument("--database", default="finsflow.sqlite", help="Run store; empty string disables it")
        sub.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    return parser


def main(argv=None):
    """
    Run one subcommand; the exit code is 0 iff the rollup is PASS.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    try:
        report = run_scenario(
            args.config, seed=args.seed, out=args.out, threads=args.threads, refinements=args.refinements,
            phases=COMMANDS[args.command], database=args.database or None,
        )
    except ConfigurationError as error:
        field = f" [{error.field}]" if error.field else ""
        print(f"configuration error{field}: {error}", file=sys.stderr)
        return 2
    print(f"{report.config.name}: {report.rollup}")
    for tag, passed in report.verdicts():
        print(f"  {tag:<22} {'PASS' if passed else 'FAIL'}")
    for failure in report.failures:
        print(f"  failure in {failure['phase']}: {failure['message']}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
