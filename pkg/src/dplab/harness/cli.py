"""Command-line front end.

Exit codes: 0 ok, 2 bad parameters or usage, 3 threshold failure under --check.
"""

from __future__ import annotations

import argparse
import sys

from ..core import ParameterError
from ..mechanisms import MONITORS
from .experiments import LEARNERS, ExperimentConfig, run_experiment
from .reports import emit_report

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 2, 3


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=0)
    common.add_argument("--out", help="report path (default: stdout)")
    common.add_argument("--check", action="store_true", help="exit 3 if acceptance thresholds fail")

    parser = argparse.ArgumentParser(prog="dplab", description="Continual-observation DP experiments.")
    sub = parser.add_subparsers(dest="kind", required=True)

    p = sub.add_parser("attack-monitor", parents=[common], help="hard-instance attack on a threshold monitor")
    p.add_argument("--mech", dest="mechanism", required=True, choices=MONITORS)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--T", type=int)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--delta", type=float)
    p.add_argument("--N", type=int, default=5000)

    p = sub.add_parser("counter-bench", parents=[common], help="binary tree counter error table")
    p.add_argument("--T", type=int, default=1024)
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--N", type=int, default=1000, help="runs for the coverage estimate")
    p.add_argument("--stream", help="file of 0/1 characters (default: random stream)")

    p = sub.add_parser("ladder", parents=[common], help="list the pi ladder rungs")
    p.add_argument("--eps", type=float, required=True, help="per-rung epsilon")
    p.add_argument("--delta", type=float, required=True, help="bottom rung probability")

    p = sub.add_parser("mirror-audit", parents=[common], help="exact JDP audit of the mirror")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--T", type=int, default=12)

    p = sub.add_parser("predictor-bench", parents=[common], help="private point predictor mistakes")
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--T", type=int, default=5000)
    p.add_argument("--N", type=int, default=500, help="independent runs")
    p.add_argument("--K", type=int, help="mirror delay (default 20k)")
    p.add_argument("--density", type=float, default=0.3, help="fraction of positive examples")
    p.add_argument("--domain", type=int, default=1000)

    p = sub.add_parser("learner-attack", parents=[common], help="attack an online point-function learner")
    p.add_argument("--learner", dest="mechanism", required=True, choices=LEARNERS)
    p.add_argument("--T", type=int, default=256, help="horizon, a perfect square")
    p.add_argument("--N", type=int, default=200, help="Monte-Carlo trials")

    p = sub.add_parser("adapt-queries", parents=[common], help="stream to threshold-query instance")
    p.add_argument("--T", type=int, default=16)
    p.add_argument("--stream", help="file of 0/1 characters (default: random stream)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    opts = {k: v for k, v in vars(args).items() if k != "check"}
    try:
        result = run_experiment(ExperimentConfig(**opts))
        emit_report(result.report, args.out)
    except (ParameterError, OSError) as exc:
        print(f"dplab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.check and result.passed is False:
        for msg in result.failures:
            print(f"dplab: check failed: {msg}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
