"""Verification routines shared by ``ulmax verify`` and the acceptance tests.

Each check returns a ``CheckResult`` whose ``line()`` is a one-line pass/fail
summary.  Thresholds are fixed acceptance tolerances and nothing here adapts them.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import agents
from .errors import InvariantViolation, ThetaOutOfRange
from .geometry import Box, FlatSimplex, Simplex, infeasible_project, loo_call_bound, sample_sphere_subspace
from .harness import ExperimentConfig, csv_text, fit_loglog, run_experiment
from .objectives import (
    QueryOracle,
    boosted_grad_exact,
    boosted_query,
    check_linearizable,
    make_quadratic,
    make_spec,
    one_point_grad,
    sample_z_mono_origin,
    sample_z_nonmono,
    smoothed_value_mc,
    z_mono_origin_cdf,
    z_nonmono_cdf,
)

HORIZONS = (2500, 5000, 10000, 20000)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} [{self.seconds:.1f}s]"


class _Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


# ---------------------------------------------------------------------------
# geometry


def random_body(rng, max_dim=5):
    d = int(rng.integers(1, max_dim + 1))
    kind = rng.integers(3) if d >= 2 else rng.integers(2)
    lo = float(rng.choice([0.0, rng.uniform(-1.0, 0.5)]))
    size = float(rng.uniform(0.5, 2.0))
    if kind == 0:
        return Box(d, lo, lo + size)
    if kind == 1:
        return Simplex(d, lo, size)
    return FlatSimplex(d, lo, size)


def ip_contract(n=1000, n_z=64, seed=0, time_limit=30.0) -> CheckResult:
    """Infeasible-projection postconditions on random box and simplex instances."""
    rng = np.random.default_rng(seed)
    worst = {"feas": 0, "gap": 0, "dom": 0, "loo": 0}
    stepped = 0
    with _Timer() as tm:
        for _ in range(n):
            body = random_body(rng)
            x0 = body.sample(rng, 1)[0]
            y0 = x0 + rng.normal(scale=rng.uniform(0.01, 2.0), size=body.dim)
            eps = float(10 ** rng.uniform(-4, -1))
            res = infeasible_project(body, x0, y0, eps)
            stepped += res.loo_calls > 0
            if not body.contains(res.x_feasible, tol=1e-9):
                worst["feas"] += 1
            if np.sum((res.x_feasible - res.y_tilde) ** 2) > 3 * eps * (1 + 1e-12):
                worst["gap"] += 1
            z = np.vstack([body.sample(rng, n_z - len(body.vertices()[:8])), body.vertices()[:8]])
            if np.any(np.linalg.norm(res.y_tilde - z, axis=1) > np.linalg.norm(y0 - z, axis=1) + 1e-9):
                worst["dom"] += 1
            if res.loo_calls > loo_call_bound(body.radius, eps, float(np.sum((x0 - y0) ** 2))):
                worst["loo"] += 1
    bad = sum(worst.values())
    ok = bad == 0 and tm.seconds <= time_limit
    detail = (f"{n} instances ({stepped} needing LOO calls), violations feasibility={worst['feas']} gap={worst['gap']} "
              f"dominance={worst['dom']} loo_bound={worst['loo']}")
    return CheckResult("infeasible projection contract", ok, detail, tm.seconds, worst)


# ---------------------------------------------------------------------------
# objectives


def z_law_ks(n=100_000, seed=0, threshold=0.006, time_limit=5.0) -> CheckResult:
    """Kolmogorov-Smirnov distance of sampled z-laws to their analytic CDFs."""
    rng = np.random.default_rng(seed)
    out = {}
    with _Timer() as tm:
        for gamma in (0.5, 1.0):
            draws = sample_z_mono_origin(gamma, rng, n)
            out[f"mono gamma={gamma}"] = stats.kstest(draws, lambda z: z_mono_origin_cdf(z, gamma)).statistic
            draws = sample_z_nonmono(rng, n)
            out[f"nonmono (run {gamma})"] = stats.kstest(draws, z_nonmono_cdf).statistic
    worst = max(out.values())
    ok = worst < threshold and tm.seconds <= time_limit
    return CheckResult("z sampling laws (KS)", ok, f"max KS {worst:.5f} < {threshold}", tm.seconds, out)


def boosted_unbiased(n=100_000, pairs=16, sigmas=4.0, seed=0, noise_sigma=0.1, time_limit=60.0) -> CheckResult:
    """Sample mean of boosted queries against the quadrature value, per coordinate."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    with _Timer() as tm:
        for case in ("A1", "A2", "A3"):
            for _ in range(pairs):
                d = int(rng.integers(1, 5))
                body = Box(d)
                f = make_quadratic(d, rng, monotone=case != "A3", concave=bool(rng.integers(2)))
                spec = make_spec(case, dim=d, anchor=np.zeros(d))
                x = body.sample(rng, 1)[0]
                oracle = QueryOracle.for_body(f, 1, noise_sigma, body.radius, rng)
                g, _ = boosted_query(spec, oracle, x, rng, size=n)
                band = sigmas * g.std(axis=0, ddof=1) / math.sqrt(n)
                err = np.abs(g.mean(axis=0) - boosted_grad_exact(spec, f, x))
                worst = max(worst, float(np.max(err / np.maximum(band, 1e-300))))
    ok = worst <= 1.0 and tm.seconds <= time_limit
    return CheckResult("boosted oracle unbiasedness", ok,
                       f"worst |mean - exact| = {worst:.3f} of the {sigmas:g}-sigma band", tm.seconds)


def linearizability(pairs=1000, seed=0, floor=-1e-7, time_limit=60.0) -> CheckResult:
    """Minimum slack of the upper-linearizable inequality per case (gamma = 1)."""
    rng = np.random.default_rng(seed)
    margins = {}
    with _Timer() as tm:
        for case in ("A1", "A2", "A3"):
            worst = np.inf
            for _ in range(pairs):
                d = int(rng.integers(1, 5))
                body = Box(d)
                f = make_quadratic(d, rng, monotone=case != "A3", concave=bool(rng.integers(2)))
                spec = make_spec(case, dim=d, anchor=body.low_anchor())
                x, y = body.sample(rng, 2)
                worst = min(worst, check_linearizable(spec, f, x, y))
            margins[case] = worst
    ok = min(margins.values()) >= floor and tm.seconds <= time_limit
    detail = "min margin " + ", ".join(f"{c}={m:.3g}" for c, m in margins.items())
    return CheckResult("upper-linearizability margins", ok, detail, tm.seconds, margins)


def one_point_estimator(n=100_000, delta=0.05, seed=0, h=1e-3, time_limit=60.0) -> CheckResult:
    """One-point gradient estimate against a finite difference of the smoothed value."""
    rng = np.random.default_rng(seed)
    d = 2
    body = Box(d)
    f = make_quadratic(d, rng, monotone=True, concave=False)
    basis = body.basis
    x = np.array([0.4, 0.6])
    with _Timer() as tm:
        v = sample_sphere_subspace(basis, rng, n)
        est = one_point_grad(f.value(x + delta * v)[:, None], v, d, delta)
        mean = est.mean(axis=0)
        mc_sigma = est.std(axis=0, ddof=1) / math.sqrt(n)
        fd = np.empty(d)
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            plus = smoothed_value_mc(f, x + e, delta, basis, n, np.random.default_rng(seed + 1))
            minus = smoothed_value_mc(f, x - e, delta, basis, n, np.random.default_rng(seed + 1))
            fd[j] = (plus - minus) / (2 * h)
    tol = 3 * mc_sigma + f.smoothness_L * delta
    err = np.abs(mean - fd)
    ok = bool(np.all(err <= tol)) and tm.seconds <= time_limit
    detail = f"|mc - fd| = {np.array2string(err, precision=4)} <= {np.array2string(tol, precision=4)}"
    return CheckResult("one-point estimator", ok, detail, tm.seconds)


# ---------------------------------------------------------------------------
# scaling


def scaling_config(variant, case, theta, T, seed, n_agents=8, noise_sigma=0.1, alpha=1.0, kind="cycle"):
    """The desk-scale instance used for rate checks: d = 2 box, rotating concave monotone pool."""
    return ExperimentConfig.from_dict({
        "network": {"kind": kind, "n": n_agents},
        "body": {"kind": "box", "dim": 2, "lo": 0.0, "hi": 1.0},
        "objective": {"family": "quadratic", "seed": 1000 + seed, "monotone": True, "concave": True,
                      "noise_sigma": noise_sigma},
        "adversary": {"kind": "rotating", "pool_size": 5, "seed": seed},
        "algorithm": {"variant": variant, "case": case, "theta": theta, "T": T, "alpha": alpha},
        "seeds": [seed],
        "run_id": f"{variant}-{case}-th{theta:g}-T{T}",
    })


@dataclass
class ScalingRun:
    variant: str
    case: str
    theta: float
    horizons: tuple
    mean_regret: list
    mean_case_regret: list
    comm: list
    loo: list
    queries: list
    expected_comm: list
    expected_queries: list
    fit: object
    loo_fit: object
    max_residual_ratio: float
    invariant_failures: int
    seconds: float


def scaling_run(variant, case, theta, horizons=HORIZONS, seeds=5, n_agents=8) -> ScalingRun:
    """Mean 1-regret over seeds at each horizon, with counters and the inline-audit record."""
    regrets, case_regrets, comm, loo, queries, exp_comm, exp_q = [], [], [], [], [], [], []
    worst_ratio, failures = 0.0, 0
    with _Timer() as tm:
        for T in horizons:
            r, rc, c, lo, q = [], [], [], [], []
            for s in range(seeds):
                cfg = scaling_config(variant, case, theta, T, s, n_agents)
                try:
                    oc = run_experiment(cfg)[0]
                except InvariantViolation:
                    failures += 1
                    continue
                rep = oc.report
                r.append(oc.mean_regret)
                rc.append(float(np.mean(oc.case_curves()[:, -1])))
                c.append(rep.comm_count)
                lo.append(rep.loo_count)
                q.append(rep.queries_per_agent.tolist())
                worst_ratio = max(worst_ratio, rep.max_residual_ratio)
                sch = rep.schedule
            regrets.append(float(np.mean(r)) if r else float("nan"))
            case_regrets.append(float(np.mean(rc)) if rc else float("nan"))
            comm.append(c)
            loo.append(float(np.mean(lo)) if lo else float("nan"))
            queries.append(q)
            exp_comm.append(sch.n_blocks)
            exp_q.append(sch.T_pad // sch.L)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_loglog(horizons, regrets)
        loo_fit = fit_loglog(horizons, [max(v, 1.0) for v in loo])
    return ScalingRun(variant, case, theta, tuple(horizons), regrets, case_regrets, comm, loo, queries,
                      exp_comm, exp_q, fit, loo_fit, worst_ratio, failures, tm.seconds)


def _slope_result(name, run: ScalingRun, limit, extra_ok=True, extra=""):
    ok = run.fit.slope <= limit and run.invariant_failures == 0 and extra_ok
    detail = (f"{run.variant}/{run.case} theta={run.theta:.4g}: regret slope {run.fit.slope:.3f} <= {limit:.3f}"
              f"{' (floored)' if run.fit.clipped else ''}{extra}")
    return CheckResult(name, ok, detail, run.seconds, {"run": run})


def scaling_droculo(seeds=5, horizons=HORIZONS, time_limit=600.0):
    """alg1 rates at theta = 1 and 0.5 with exact communication counts."""
    out = []
    total = 0.0
    for theta, limit in ((1.0, 0.6), (0.5, 0.85)):
        run = scaling_run("alg1", "A1", theta, horizons, seeds)
        total += run.seconds
        comm_ok = all(all(c == e for c in cs) for cs, e in zip(run.comm, run.expected_comm))
        loo_ok = run.loo_fit.slope <= 2 * theta + 0.15
        extra = (f"; comm == T/K: {comm_ok}; LOO slope {run.loo_fit.slope:.3f} <= {2 * theta + 0.15:.2f}")
        out.append(_slope_result(f"alg1 rate theta={theta:g}", run, limit, comm_ok and loo_ok, extra))
    out.append(CheckResult("alg1 runtime", total <= time_limit, f"{total:.0f}s <= {time_limit:.0f}s", total))
    return out


def scaling_zeroth(seeds=5, horizons=HORIZONS, theta=0.8, time_limit=600.0):
    """alg2 (A1) and alg4 (A2) rates at theta = 0.8."""
    out, total = [], 0.0
    limit = 1 - theta / 4 + 0.1
    for variant, case in (("alg2", "A1"), ("alg4", "A2")):
        run = scaling_run(variant, case, theta, horizons, seeds)
        total += run.seconds
        comm_ok = all(all(c == e for c in cs) for cs, e in zip(run.comm, run.expected_comm))
        out.append(_slope_result(f"{variant} rate theta={theta:g}", run, limit, comm_ok, f"; comm == T/K: {comm_ok}"))
    out.append(CheckResult("alg2/alg4 runtime", total <= time_limit, f"{total:.0f}s <= {time_limit:.0f}s", total))
    return out


def theta_range() -> CheckResult:
    raised = []
    for variant, theta in (("alg3", 0.8), ("alg5", 0.9)):
        try:
            agents.make_schedule(variant, "A2", theta, 10_000, 1.0)
        except ThetaOutOfRange:
            raised.append(variant)
    ok = raised == ["alg3", "alg5"]
    return CheckResult("theta range guard", ok, f"ThetaOutOfRange raised for {raised}")


def scaling_semibandit(seeds=5, horizons=HORIZONS, time_limit=600.0):
    """alg3 at theta = 2/3 and alg5 at theta = 0.8: exact counters and rates."""
    out, total = [theta_range()], 0.0
    for variant, theta in (("alg3", 2.0 / 3.0), ("alg5", 0.8)):
        limit = 1 - theta / 2 + 0.1 if variant == "alg3" else 1 - theta / 4 + 0.1
        run = scaling_run(variant, "A2", theta, horizons, seeds)
        total += run.seconds
        comm_ok = all(all(c == e for c in cs) for cs, e in zip(run.comm, run.expected_comm))
        q_ok = all(all(all(v == e for v in agent_q) for agent_q in qs) for qs, e in zip(run.queries, run.expected_queries))
        extra = f"; queries == T/L per agent: {q_ok}; comm == T/(KL): {comm_ok}"
        out.append(_slope_result(f"{variant} rate theta={theta:.4g}", run, limit, comm_ok and q_ok, extra))
    out.append(CheckResult("alg3/alg5 runtime", total <= time_limit, f"{total:.0f}s <= {time_limit:.0f}s", total))
    return out


def residual_invariant(results) -> CheckResult:
    """Summarize the inline residual audit over the scaling checks already run."""
    runs = [r.data["run"] for r in results if "run" in r.data]
    failures = sum(r.invariant_failures for r in runs)
    worst = max((r.max_residual_ratio for r in runs), default=0.0)
    ok = bool(runs) and failures == 0 and worst <= 1.0
    return CheckResult("residual invariant", ok,
                       f"{len(runs)} sweeps, {failures} violations, max residual / cap = {worst:.3f}")


def determinism(T=3000, time_limit=60.0) -> CheckResult:
    """Byte-identical CSV for repeated runs and for 1 versus 8 workers."""
    with _Timer() as tm:
        texts = []
        for variant, case, theta in (("alg1", "A1", 0.5), ("alg5", "A2", 0.8)):
            cfg = scaling_config(variant, case, theta, T, seed=7)
            a = csv_text(run_experiment(cfg, workers=1)[0])
            b = csv_text(run_experiment(cfg, workers=8)[0])
            c = csv_text(run_experiment(cfg, workers=1)[0])
            texts.append(a == b == c)
    ok = all(texts) and tm.seconds <= time_limit
    return CheckResult("determinism", ok, f"identical CSV across repeats and workers 1/8: {texts}", tm.seconds)


SUITES = {
    "geometry": lambda: [ip_contract()],
    "objectives": lambda: [z_law_ks(), boosted_unbiased(), linearizability(), one_point_estimator()],
    "scaling": lambda: _scaling_suite(),
}


def _scaling_suite():
    res = scaling_droculo() + scaling_zeroth() + scaling_semibandit()
    return res + [residual_invariant(res), determinism()]


def run_suite(name):
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name]()
