"""Command-line front end.

``mlpsort sort`` runs one configuration for a number of repetitions;
``mlpsort sweep`` runs the Cartesian product of one or more value axes
over the same template.  Records stream to --out (or stdout) as JSON
lines or CSV.  Exit codes: 0 success, 1 configuration error, 2 at least
one verification failure.
"""

from __future__ import annotations

import argparse
import sys

from .bench import (
    ConfigError,
    ExperimentConfig,
    parse_axis,
    run_experiment,
    sweep,
    write_records,
)


class _Parser(argparse.ArgumentParser):
    # Usage problems are configuration errors: exit 1, not argparse's 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _add_config_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algo", choices=["ams", "rlm"], default="ams")
    p.add_argument("--pes", type=int, default=8, help="number of simulated PEs")
    p.add_argument("--n-per-pe", type=int, default=1000)
    p.add_argument("--levels", type=int, default=None,
                   help="recursion levels (default: 1, or len of --groups)")
    p.add_argument("--groups", default=None,
                   help="comma-separated group counts per level, e.g. 8,8")
    p.add_argument("--a", type=float, default=None,
                   help="oversampling factor (default 1.6*log10 n)")
    p.add_argument("--b", type=int, default=16, help="overpartitioning factor")
    p.add_argument("--eps", type=float, default=0.2,
                   help="acceptable output imbalance")
    p.add_argument("--delivery", default="deterministic",
                   choices=["simple", "permuted", "deterministic", "randomized"])
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--dist", default="uniform",
                   help="uniform | sorted | reverse | zipf:THETA | equal")
    p.add_argument("--alpha", type=float, default=1.0,
                   help="modeled startup cost per message")
    p.add_argument("--beta", type=float, default=1.0,
                   help="modeled cost per word")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--format", dest="fmt", choices=["jsonl", "csv"],
                   default="jsonl")
    p.add_argument("--verify", action="store_true",
                   help="check the output against a sequential sort")
    p.add_argument("--verify-cap", type=int, default=10_000_000,
                   help="skip verification above this total element count")
    p.add_argument("--timing", action="store_true",
                   help="include wall-clock fields (breaks byte-identical output)")


def _config_from(args) -> ExperimentConfig:
    groups = None
    if args.groups:
        try:
            groups = tuple(int(tok) for tok in args.groups.split(",") if tok)
        except ValueError:
            raise ConfigError(f"bad --groups value {args.groups!r}") from None
    levels = args.levels
    if levels is None:
        levels = len(groups) if groups else 1
    return ExperimentConfig(
        algo=args.algo, pes=args.pes, n_per_pe=args.n_per_pe,
        levels=levels, groups=groups,
        a=args.a, b=args.b, eps=args.eps, delivery=args.delivery,
        seed=args.seed, reps=args.reps, dist=args.dist,
        alpha=args.alpha, beta=args.beta, verify=args.verify,
        verify_cap=args.verify_cap, timing=args.timing,
    )


def main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="mlpsort",
                     description="simulated multi-level parallel sorting")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sort = sub.add_parser("sort", parents=[], help="run one configuration")
    _add_config_options(p_sort)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    _add_config_options(p_sweep)
    p_sweep.add_argument("--axis", action="append", default=[],
                         metavar="PARAM=V1,V2,...",
                         help="sweep axis; repeat for a Cartesian product")

    args = parser.parse_args(argv)
    try:
        config = _config_from(args)
        config.validate()
        if args.command == "sort":
            records = run_experiment(config)
        else:
            axes = [parse_axis(text) for text in args.axis]
            records = sweep(config, axes)
        if args.out:
            with open(args.out, "w", newline="") as handle:
                failures = write_records(records, handle, args.fmt)
        else:
            failures = write_records(records, sys.stdout, args.fmt)
    except ConfigError as exc:
        print(f"mlpsort: config error: {exc}", file=sys.stderr)
        return 1
    return 2 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
