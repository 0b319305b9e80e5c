"""Command line entry point: ``simulate``, ``estimate``, ``verify``, ``experiment``.

Exit status is 0 on success, 2 on usage errors (bad flags or parameters) and
1 on runtime failures, including failed verification checks and experiment
cells where every realisation failed.  The default worker count is read from
``EXTREMAL_CLUSTERING_WORKERS``.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .core import (
    Family,
    InvalidSpecError,
    NoExceedancesError,
    PeriodicModelSpec,
    SimulationError,
    ThresholdSpec,
    interexceedances,
    resolve_threshold,
)
from .estimators import MleOptions, estimate
from .experiments import PRESET_CONFIGS, ExperimentConfig, run_experiment, write_provenance, write_results_csv
from .models import PRESETS, RngStream, read_series, simulate, write_series
from .parallel import WORKERS_ENV


class UsageError(Exception):
    pass


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--preset", choices=sorted(PRESETS),
                   help="seasonal 7-phase model with parameters 0.5 + 0.25 sin(2 pi (m-1)/7)")
    g.add_argument("--family", choices=[f.value for f in Family], help="model family")
    g.add_argument("--params", help="comma-separated per-phase parameters (rho or alpha); overrides the preset")
    g.add_argument("-d", "--period", type=int, help="period d; must equal the number of parameters")


def _model(args) -> PeriodicModelSpec:
    base = PRESETS[args.preset] if args.preset else None
    family = args.family or (base.family if base else None)
    if args.params:
        try:
            params = tuple(float(v) for v in args.params.split(","))
        except ValueError:
            raise UsageError(f"cannot parse --params {args.params!r}") from None
    elif base is not None:
        params = base.params
    else:
        raise UsageError("give --preset or --family with --params")
    if family is None:
        raise UsageError("--params needs --family or --preset")
    d = args.period if args.period is not None else len(params)
    return PeriodicModelSpec(Family(family), d, params)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extremal-clustering",
        description="Simulate periodic Markov chains and estimate their extremal clustering function.",
        epilog=f"Default worker count: ${WORKERS_ENV}.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a series and write one value per line")
    _add_model_flags(p)
    p.add_argument("-n", type=int, required=True, help="series length")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--stream", type=int, default=0, help="stream id (realisation index)")
    p.add_argument("-o", "--out", required=True, help="output file")

    p = sub.add_parser("estimate", help="estimate theta_1..theta_d and gamma; prints a CSV row")
    _add_model_flags(p)
    p.add_argument("-n", type=int, help="length of the simulated series")
    p.add_argument("--input", help="read the series from this file instead of simulating")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--stream", type=int, default=0, help="stream id")
    thr = p.add_mutually_exclusive_group(required=True)
    thr.add_argument("--tail-p", type=float, help="threshold exceeded with this probability")
    thr.add_argument("--level", type=float, help="absolute threshold")
    p.add_argument("--estimator", choices=["intervals", "mle"], default="intervals", help="estimator")
    p.add_argument("--k", type=int, nargs="+", default=[1],
                   help="run length(s) for mle: one shared value or one per phase")
    p.add_argument("--fbar", default="empirical",
                   help="tail probability for mle: 'empirical', 'exact' (needs --tail-p) or a number")

    p = sub.add_parser("verify", help="run the limit-theorem checks and write a CSV report")
    p.add_argument("-n", type=int, default=10_000, help="sequence length for the law of the maximum")
    p.add_argument("--reps", type=int, default=1000, help="realisations per check")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    p.add_argument("-o", "--out", required=True, help="CSV report path")

    p = sub.add_parser("experiment", help="run a Monte Carlo study; writes CSV, provenance and SVG")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON config file")
    src.add_argument("--preset", choices=sorted(PRESET_CONFIGS), help="built-in study")
    p.add_argument("--reps", type=int, help="override the number of realisations")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    p.add_argument("--no-figures", action="store_true", help="skip SVG output")
    p.add_argument("-o", "--out", required=True, help="output directory")
    return parser


def _cmd_simulate(args) -> int:
    spec = _model(args)
    series = simulate(spec, args.n, RngStream(args.seed, args.stream))
    write_series(args.out, series)
    print(f"simulated {series.n} values ({spec.family.value}, d={spec.d}, seed={args.seed}) -> {args.out}")
    return 0


def _cmd_estimate(args) -> int:
    spec = _model(args)
    if args.input:
        series = read_series(args.input, spec, args.seed, args.stream)
    elif args.n:
        series = simulate(spec, args.n, RngStream(args.seed, args.stream))
    else:
        raise UsageError("give -n or --input")
    if args.tail_p is not None:
        u = resolve_threshold(ThresholdSpec.tail(args.tail_p), spec.family)
    else:
        u = args.level
    opts = None
    if args.estimator == "mle":
        if args.fbar == "exact":
            if args.tail_p is None:
                raise UsageError("--fbar exact needs --tail-p")
            fbar = args.tail_p
        elif args.fbar == "empirical":
            fbar = "empirical"
        else:
            try:
                fbar = float(args.fbar)
            except ValueError:
                raise UsageError(f"bad --fbar {args.fbar!r}") from None
        opts = MleOptions(run_lengths=args.k[0] if len(args.k) == 1 else tuple(args.k), fbar=fbar)
    rec = estimate(interexceedances(series, u), args.estimator, opts)
    row = rec.as_row()
    w = csv.DictWriter(sys.stdout, fieldnames=list(row), lineterminator="\n")
    w.writeheader()
    w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return 0


def _cmd_verify(args) -> int:
    from .theory import run_verification, write_verification_csv

    rows = run_verification(n=args.n, reps=args.reps, seed=args.seed, workers=args.workers)
    write_verification_csv(rows, args.out)
    failed = [r for r in rows if not r.passed]
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed -> {args.out}")
    return 1 if failed else 0


def _cmd_experiment(args) -> int:
    config = ExperimentConfig.from_json(args.config) if args.config else PRESET_CONFIGS[args.preset]
    changes = {}
    if args.reps is not None:
        changes["reps"] = args.reps
    if args.seed is not None:
        changes["seed"] = args.seed
    if changes:
        config = config.replace(**changes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_experiment(config, workers=args.workers)
    write_results_csv(result, out / "results.csv")
    write_provenance(result, out / "provenance.json")
    if not args.no_figures:
        from .plotting import render_theta_figure

        spec = config.spec
        alphas = spec.params if spec.family is Family.LOGISTIC_MARKOV else None
        for n, p in config.cell_list():
            render_theta_figure(result, n, p, out / f"theta_n{n}_p{p:g}.svg", alphas=alphas, d=spec.d)
    failed = result.failed_cells
    print(f"{len(config.cell_list())} cells x {len(config.estimators)} estimators, "
          f"{config.reps} reps, {len(failed)} failed -> {out}")
    return 1 if failed else 0


COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "verify": _cmd_verify,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InvalidSpecError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SimulationError, NoExceedancesError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
