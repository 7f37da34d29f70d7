"""Regret, communication and LOO exponents for one variant over a horizon sweep.

    python3 scripts/scaling_sweep.py --variant alg1 --case A1 --theta 1.0 0.5 --seeds 5

Uses the desk-scale instance from ``ulmax.checks.scaling_config`` (d = 2 box,
8-agent cycle, rotating pool of concave monotone quadratics).
"""

import argparse
import json

from ulmax.checks import HORIZONS, scaling_run


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--variant", default="alg1")
    p.add_argument("--case", default="A1")
    p.add_argument("--theta", type=float, nargs="+", default=[1.0])
    p.add_argument("--horizons", type=int, nargs="+", default=list(HORIZONS))
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--agents", type=int, default=8)
    p.add_argument("--json", action="store_true", help="print one JSON object per theta")
    args = p.parse_args()

    for theta in args.theta:
        run = scaling_run(args.variant, args.case, theta, tuple(args.horizons), args.seeds, args.agents)
        row = {
            "variant": run.variant, "case": run.case, "theta": theta,
            "horizons": list(run.horizons), "mean_regret": run.mean_regret,
            "mean_case_regret": run.mean_case_regret,
            "regret_slope": run.fit.slope, "loo_slope": run.loo_fit.slope,
            "comm": [c[0] if c else None for c in run.comm], "expected_comm": run.expected_comm,
            "max_residual_ratio": run.max_residual_ratio, "seconds": run.seconds,
        }
        if args.json:
            print(json.dumps(row))
            continue
        print(f"{run.variant}/{run.case} theta={theta:g}: regret slope {run.fit.slope:.3f}, "
              f"LOO slope {run.loo_fit.slope:.3f}, residual/cap {run.max_residual_ratio:.3f}, {run.seconds:.0f}s")
        for T, r, rc, c in zip(run.horizons, run.mean_regret, run.mean_case_regret, row["comm"]):
            print(f"  T={T:6d}  1-regret {r:10.2f}  case-alpha regret {rc:10.2f}  comm {c}")


if __name__ == "__main__":
    main()
