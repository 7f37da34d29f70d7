"""Command line entry point: ``run``, ``sweep`` and ``verify``."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigInvalid


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="ulmax", description="Decentralized projection-free online maximization experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one configured experiment and write CSV + JSON")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int, default=None, help="override the seeds list with one seed")
    run.add_argument("--workers", type=int, default=None, help="threads used across agents")

    sw = sub.add_parser("sweep", help="run a grid of (theta, T, seed) jobs and fit rate exponents")
    sw.add_argument("--config", required=True)
    sw.add_argument("--theta", type=_floats, default=[0.5, 0.75, 1.0])
    sw.add_argument("--horizons", type=_ints, default=[2500, 5000, 10000, 20000])
    sw.add_argument("--out", required=True)
    sw.add_argument("--workers", type=int, default=1, help="parallel jobs")

    ver = sub.add_parser("verify", help="run a verification suite and print one line per check")
    ver.add_argument("--suite", choices=("geometry", "objectives", "scaling"), required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    from . import checks, harness

    try:
        if args.command == "run":
            cfg = harness.ExperimentConfig.load(args.config)
            if args.seed is not None:
                cfg.seeds = [args.seed]
            outcomes = harness.run_experiment(cfg, args.out, workers=args.workers)
            for oc in outcomes:
                rep = oc.report
                print(f"{oc.run_id}: mean final regret {oc.mean_regret:.4g} (alpha={oc.alpha:.4g}), "
                      f"comm={rep.comm_count} loo={rep.loo_count} queries={rep.query_count}")
            return 0
        if args.command == "sweep":
            cfg = harness.ExperimentConfig.load(args.config)
            _, fits = harness.sweep(cfg, args.theta, args.horizons, workers=args.workers, out=args.out)
            print(json.dumps(fits, indent=2))
            return 0
        results = checks.run_suite(args.suite)
        for r in results:
            print(r.line())
        return 0 if all(r.passed for r in results) else 1
    except ConfigInvalid as exc:
        print(exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
