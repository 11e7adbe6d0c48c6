"""Command-line entry point: run experiments, summarize results, sweep loads, fit traces."""

from __future__ import annotations

import argparse
import sys

from . import harness
from .inference import GammaPosterior, fit_exponential, load_trace


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polsim",
        description="Load-balancing experiments over parallel finite-buffer queues "
        "with delayed acknowledgements.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True, help="YAML config file")
    p_run.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (dotted paths allowed), repeatable",
    )
    p_run.add_argument("--workers", type=int, default=None, help="parallel run workers")

    p_sum = sub.add_parser("summarize", help="recompute the summary from result CSVs")
    p_sum.add_argument("results_dir")

    p_sweep = sub.add_parser("sweep", help="rerun an experiment over offered loads")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument(
        "--eta", required=True, help="comma-separated offered-load targets, e.g. 0.2,0.6,1.0"
    )
    p_sweep.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p_sweep.add_argument("--workers", type=int, default=None)

    p_fit = sub.add_parser("fit", help="fit an exponential rate posterior to a trace")
    p_fit.add_argument("--trace", required=True, help="trace file of positive durations")
    p_fit.add_argument("--column", default=None, help="CSV column name (headered CSV)")
    p_fit.add_argument("--alpha0", type=float, default=1.0, help="Gamma prior shape")
    p_fit.add_argument("--beta0", type=float, default=1.0, help="Gamma prior rate")
    return parser


def _cmd_run(args) -> int:
    config = harness.load_config(args.config, args.override)
    if args.workers is not None:
        config.workers = args.workers
    summary = harness.run_experiment(config)
    print(f"results written to {config.output_dir}")
    print(f"eta = {config.offered_load():.9g}, tree_reuse = {config.planner.reuse_tree}")
    print(harness.format_summary(summary))
    return 0


def _cmd_summarize(args) -> int:
    print(harness.format_summary(harness.summarize(args.results_dir)))
    return 0


def _cmd_sweep(args) -> int:
    config = harness.load_config(args.config, args.override)
    if args.workers is not None:
        config.workers = args.workers
    try:
        etas = [float(v) for v in args.eta.split(",") if v.strip()]
    except ValueError:
        raise RuntimeError(f"bad --eta list: {args.eta!r}") from None
    if not etas:
        raise RuntimeError("--eta list is empty")
    results = harness.sweep(config, etas)
    for eta, summary in results.items():
        print(f"\n=== offered load eta = {eta:g} ===")
        print(harness.format_summary(summary))
    return 0


def _cmd_fit(args) -> int:
    data = load_trace(args.trace, column=args.column)
    prior = GammaPosterior(args.alpha0, args.beta0)
    post = fit_exponential(data, prior)
    print(f"observations: {len(data)}")
    print(f"posterior: Gamma(alpha={post.alpha:.9g}, beta={post.beta:.9g})")
    print(f"posterior mean rate: {post.mean:.9g}")
    print(f"predictive mean duration: {post.predictive_mean:.9g}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "summarize": _cmd_summarize,
        "sweep": _cmd_sweep,
        "fit": _cmd_fit,
    }
    try:
        return handlers[args.command](args)
    except (RuntimeError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
