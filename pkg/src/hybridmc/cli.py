"""Command line entry point.

Exit status: 0 success, 1 configuration error, 2 runtime error, 3 some
replicates failed.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .harness.aerosol import DataError, dataset_from_config, run_aerosol_experiment
from .harness.config import ConfigError, load_config
from .harness.runner import mode_detection_campaign, run_benchmark, tune_xi_scan

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _synth(text: str) -> dict:
    out = {}
    for item in text.split(","):
        if not item.strip():
            continue
        key, _, val = item.partition("=")
        key = key.strip()
        if not val:
            raise argparse.ArgumentTypeError(f"expected key=value, got {item!r}")
        out[key] = int(val) if key in ("n", "seed") else float(val)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override base_seed")
    budget = common.add_mutually_exclusive_group()
    budget.add_argument("--budget-iters", type=int, help="override the budget with a sweep count")
    budget.add_argument("--budget-secs", type=float, help="override the budget with wall-clock seconds")
    common.add_argument("--burn-in", type=int, help="override burn_in for chain samplers")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="parallel replicate workers")

    p = argparse.ArgumentParser(prog="hybridmc", description="Hybrid MCMC and population Monte Carlo experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="one replicate of every algorithm")
    sub.add_parser("bench", parents=[common], help="all replicates with a summary")
    sub.add_parser("mode-detect", parents=[common], help="second-mode detection campaign")
    xi = sub.add_parser("tune-xi", parents=[common], help="correction acceptance over a grid of xi")
    xi.add_argument("--grid", type=_floats, help="comma-separated xi values (default: the config's xi_grid)")
    aer = sub.add_parser("aerosol", parents=[common], help="mixture fit to diameter data")
    src = aer.add_mutually_exclusive_group()
    src.add_argument("--data", help="text file with one diameter per line")
    src.add_argument("--synth", type=_synth, help="synthetic data, e.g. n=2000,lambda=0.4,mu1=1,mu2=3")
    return p


def _load(args):
    cfg = load_config(args.config)
    if args.budget_iters is not None and args.budget_iters < 1:
        raise ConfigError("--budget-iters must be positive")
    if args.budget_secs is not None and args.budget_secs <= 0:
        raise ConfigError("--budget-secs must be positive")
    if args.burn_in is not None:
        if args.burn_in < 0:
            raise ConfigError("--burn-in must be nonnegative")
        cfg.burn_in = args.burn_in
    return cfg.with_overrides(
        seed=args.seed, iterations=args.budget_iters, seconds=args.budget_secs, out=args.out, workers=args.workers
    )


def _print_reports(reports) -> None:
    for r in reports:
        eta = "" if r.eta is None else f" eta={r.eta:.4f}"
        print(f"{r.algorithm:>14} seed={r.seed} T={r.T} A={r.A:.3f} H={r.H:.4f} tau={r.tau:.2f} ess={r.ess:.1f} n_b={r.n_b}{eta}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command in ("run", "bench"):
            if args.command == "run":
                cfg.replicates = 1
            result = run_benchmark(cfg)
            _print_reports(result.reports)
            for f in result.failures:
                print(f"failed: {f.label} replicate {f.replicate}: {f.error}", file=sys.stderr)
            print(f"wrote {', '.join(str(p) for p in result.paths)}")
            if result.failures:
                return EXIT_PARTIAL if result.reports else EXIT_RUNTIME
        elif args.command == "mode-detect":
            for label, res in mode_detection_campaign(cfg).items():
                print(f"{label:>14} detected {res.count}/{len(res.times)} within {res.window} iterations")
        elif args.command == "tune-xi":
            for row in tune_xi_scan(cfg, args.grid):
                eta = "undefined" if row.eta is None else f"{row.eta:.4f}"
                print(f"{row.label:>14} xi={row.xi:g} eta={eta} ({row.correction_accepted}/{row.propose_accepted})")
        elif args.command == "aerosol":
            dataset = dataset_from_config(cfg, args.data, args.synth)
            for label, res in run_aerosol_experiment(cfg, dataset).items():
                print(f"{label:>8} T={res.report.T} tau_bar={res.tau_bar:.2f} ess={res.ess:.1f}")
                for name, m, lo, hi in zip(("mu1", "mu2", "sigma1", "sigma2", "lambda"), res.means, res.lower, res.upper):
                    print(f"{'':>10}{name:>7} {m:.4f} [{lo:.4f}, {hi:.4f}]")
    except (ConfigError, DataError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
