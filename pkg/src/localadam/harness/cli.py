"""Command line entry point.

Verbs: ``run <config>``, ``compare <config>``, ``lemmas`` and ``appendix-d``.
Exit codes are 0 on success, 2 on a configuration error and 3 on any other
failure. ``LOCALADAM_OUTPUT_DIR`` overrides the configured output directory.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback

from .config import ConfigError, load_config
from .runner import compare, run_experiment
from .suites import AppendixDParams, run_appendix_d, run_lemma_suite

OUTPUT_ENV = "LOCALADAM_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="localadam", description="Local Adam / Local SGDM simulator")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run a seed sweep over a hyper-parameter grid")
    r.add_argument("config")
    c = sub.add_parser("compare", help="tune local and minibatch families and compare them")
    c.add_argument("config")

    lem = sub.add_parser("lemmas", help="Monte-Carlo checks of the clipping and averaging bounds")
    lem.add_argument("--draws", type=int, default=200_000)
    lem.add_argument("--seed", type=int, default=0)

    d = sub.add_parser("appendix-d", help="heavy-tail failure rate of SGD with and without clipping")
    defaults = AppendixDParams()
    for name, typ in (("eps", float), ("L", float), ("eta", float), ("sigma", float),
                      ("alpha", float), ("x0", float)):
        d.add_argument(f"--{name}", type=typ, default=getattr(defaults, name))
    d.add_argument("--T", type=int, default=None, help="horizon; default is the smallest valid T")
    d.add_argument("--rho", type=float, default=None, help="clipping threshold; default 3 sigma")
    d.add_argument("--trials", type=int, default=defaults.n_trials)
    d.add_argument("--seed", type=int, default=defaults.seed)
    return p


def _run(args) -> int:
    out_dir = os.environ.get(OUTPUT_ENV) or None
    if args.verb in ("run", "compare"):
        cfg = load_config(args.config)
        if args.verb == "run":
            report = run_experiment(cfg, output_dir=out_dir)
            print(report.table())
        else:
            report = compare(cfg, output_dir=out_dir)
            print(report.summary.table())
            print()
            print(report.table())
        return EXIT_OK
    if args.verb == "lemmas":
        if args.draws < 100_000:
            raise ConfigError("--draws", "must be at least 100000")
        print(run_lemma_suite(args.seed, args.draws).table())
        return EXIT_OK
    params = AppendixDParams(eps=args.eps, L=args.L, eta=args.eta, sigma=args.sigma,
                             alpha=args.alpha, x0=args.x0, T=args.T, rho=args.rho,
                             n_trials=args.trials, seed=args.seed)
    if not 0 < params.eta <= 1 / params.L:
        raise ConfigError("--eta", "need 0 < eta <= 1/L")
    if params.n_trials < 1 or (params.T is not None and params.T < 1):
        raise ConfigError("--trials/--T", "must be positive")
    print(run_appendix_d(params).text())
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
