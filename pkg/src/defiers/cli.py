"""Command-line entry point: ``defiers estimate``, ``defiers simulate``, ``defiers dataset``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .model import TypeVector
from .reporting import RunConfig, bundled_dataset_text, format_grouped, run_pipeline
from .simulator import SimConfig, simulate_grouped


def _counts(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected four comma-separated integers, got {text!r}")
    if len(values) != 4:
        raise argparse.ArgumentTypeError(f"expected four comma-separated integers, got {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="defiers",
        description="Estimate counts of never takers, defiers, compliers and always takers "
        "from a 2x2 instrument/treatment table.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="run the baseline and the estimators on grouped data")
    src = est.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help='JSON {"g": [g1,g2,g3,g4]} or CSV with header z,d,count')
    src.add_argument("--counts", type=_counts, help="inline g1,g2,g3,g4")
    est.add_argument("--estimator", choices=("ls", "mle", "both"), default="ls")
    est.add_argument("--p", dest="p_mode", default="empirical",
                     help="fixed=<value>, empirical (default) or estimate")
    est.add_argument("--bootstrap", type=int, default=0, metavar="R",
                     help="bootstrap replications (0 disables)")
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--restarts", type=int, default=None)
    est.add_argument("--output", help="write the report here instead of stdout")
    est.add_argument("--format", choices=("json", "text"), default="json")

    sim = sub.add_parser("simulate", help="draw grouped data from the assignment model")
    sim.add_argument("--t", required=True, type=_counts, help="t1,t2,t3,t4")
    sim.add_argument("--p", required=True, type=float)
    sim.add_argument("--reps", type=int, default=1)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--output", help="write JSON lines here instead of stdout")

    sub.add_parser("dataset", help="print the bundled sibling sex-mix counts")
    return parser


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "estimate":
            cfg = RunConfig(
                input_path=args.input,
                counts=args.counts,
                estimator=args.estimator,
                p_mode=args.p_mode,
                bootstrap=args.bootstrap,
                seed=args.seed,
                restarts=args.restarts,
                output=args.output,
                format=args.format,
            )
            _emit(run_pipeline(cfg).render(cfg.format), cfg.output)
        elif args.command == "simulate":
            cfg = SimConfig(TypeVector.of(args.t), args.p, args.seed, args.reps)
            lines = "".join(format_grouped(g) + "\n" for g in simulate_grouped(cfg))
            _emit(lines, args.output)
        else:
            sys.stdout.write(bundled_dataset_text())
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"defiers: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
