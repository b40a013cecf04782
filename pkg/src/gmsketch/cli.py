"""Command-line entry point: ``gmsketch <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import harness
from .model import TreeModel
from .sketches import load_snapshot, make_sketch, save_snapshot, StreamKeys
from .synth import (
    EASY,
    HARD,
    NaiveBayesSpec,
    read_stream,
    sample_heavy_queries,
    sample_stream,
    write_queries,
    write_stream,
)


def _budgets(text: str) -> tuple[int, ...]:
    """``"8:24"`` -> 2**8 .. 2**24; ``"256,1024"`` -> explicit counters."""
    if ":" in text:
        lo, hi = (int(t) for t in text.split(":"))
        return tuple(2**b for b in range(lo, hi + 1))
    return tuple(int(t) for t in text.split(","))


def _add_sweep_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-train", type=int, default=10**6)
    p.add_argument("--n-test", type=int, default=5 * 10**5)
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--budgets", type=_budgets, default=harness.DEFAULT_BUDGETS,
                   help="log2 range 'lo:hi' or comma-separated counter counts")
    p.add_argument("--estimators", default=",".join(harness.ESTIMATORS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth", choices=("analytic", "oracle"), default="analytic")
    p.add_argument("--out", help="write results here (.csv or .json)")


def _print_result(result: harness.ExperimentResult) -> None:
    print(",".join(harness.CSV_COLUMNS))
    for c in result.cells:
        print(",".join("" if v is None else str(v) for v in c.row().values()))


def _cmd_synth(args, spec: NaiveBayesSpec) -> int:
    cfg = harness.ExperimentConfig(
        spec=spec, n_train=args.n_train, n_test=args.n_test, runs=args.runs, d=args.d,
        budgets=args.budgets, estimators=tuple(args.estimators.split(",")), seed=args.seed,
        truth=args.truth, output=args.out,
    )
    _print_result(harness.run_experiment(cfg))
    return 0


def _cmd_run(args) -> int:
    cfg = harness.ExperimentConfig.load(args.config)
    if args.out:
        cfg.output = args.out
    _print_result(harness.run_experiment(cfg))
    return 0


def _cmd_build(args) -> int:
    model = TreeModel.load(args.model)
    d = 1 if args.estimator == "gmhash" else args.d
    sk = make_sketch(args.estimator, model, args.m, d, args.seed)
    sk.ingest(StreamKeys.from_observations(model, read_stream(args.stream), vector=args.estimator == "cm"))
    save_snapshot(sk, args.out)
    print(f"{sk.kind}: n={sk.n} m={sk.m} d={sk.d} counters={sk.space} -> {args.out}")
    return 0


def _cmd_query(args) -> int:
    sk = load_snapshot(args.snapshot)
    x = [int(v) for v in args.x.replace(",", " ").split()]
    print(repr(sk.query(x)))
    return 0


def _cmd_sample(args) -> int:
    spec = NaiveBayesSpec(args.K, args.M, args.N)
    write_stream(sample_stream(spec, args.n, args.seed), args.out)
    if args.queries:
        write_queries(sample_heavy_queries(spec, args.n_queries, args.seed + 1), args.queries)
    if args.model_out:
        from .synth import tree_of
        with open(args.model_out, "w") as fh:
            json.dump(tree_of(spec).to_json(), fh)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gmsketch", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-easy", help="sweep the easy synthetic problem (K=4, N=8)")
    _add_sweep_args(p)
    p.set_defaults(func=lambda a: _cmd_synth(a, EASY))

    p = sub.add_parser("synth-hard", help="sweep the hard synthetic problem (K=32, N=64)")
    _add_sweep_args(p)
    p.set_defaults(func=lambda a: _cmd_synth(a, HARD))

    p = sub.add_parser("run", help="run a sweep described by a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("build", help="sketch a stream file into a snapshot")
    p.add_argument("--model", required=True)
    p.add_argument("--stream", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--estimator", choices=harness.ESTIMATORS, default="gmfactor")
    p.add_argument("--m", type=int, default=1024)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("query", help="estimate P(x) from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--x", required=True, help='space-separated values, e.g. "1 7 3"')
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("sample", help="write a synthetic stream (and heavy queries) to files")
    p.add_argument("--K", type=int, default=EASY.K)
    p.add_argument("--M", type=int, default=EASY.M)
    p.add_argument("--N", type=int, default=EASY.N)
    p.add_argument("--n", type=int, default=10**5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--queries")
    p.add_argument("--n-queries", type=int, default=1000)
    p.add_argument("--model-out")
    p.set_defaults(func=_cmd_sample)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"gmsketch: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
