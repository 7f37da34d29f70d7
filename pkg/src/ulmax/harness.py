"""Experiment orchestration: adversaries, comparators, regret curves, configs and output files."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import agents
from .errors import AgentOutOfRange, ConfigInvalid, NonPositiveRegret, ResolutionTooCoarse
from .geometry import ConvexBody, body_from_config
from .network import metropolis_weights, topology_from_config
from .objectives import (
    CASES,
    ObjectivePool,
    ObjectiveTable,
    QuadraticObjective,
    linear_objective,
    make_quadratic,
    make_spec,
)

CSV_HEADER = (
    "run_id", "variant", "case", "theta", "T", "K", "L", "eta", "eps", "delta", "N",
    "agent", "t", "reward", "cum_regret", "comm_count", "loo_count", "query_count", "seed",
)
ADVERSARY_KINDS = ("fixed", "rotating", "stochastic")


# ---------------------------------------------------------------------------
# adversaries


@dataclass(frozen=True)
class AdversarySpec:
    """How the sequence ``f_{t,i}`` is drawn from a pool of objectives.

    ``fixed`` uses ``pool[0]`` everywhere, ``rotating`` gives agent ``i`` the
    member ``(t + i) mod P`` at round ``t`` and ``stochastic`` draws members
    i.i.d. with ``seed``.
    """

    kind: str
    pool: tuple
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ADVERSARY_KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}")
        if not self.pool:
            raise ValueError("objective pool is empty")

    def table(self, T, N) -> ObjectiveTable:
        P = len(self.pool)
        if self.kind == "fixed":
            index = np.zeros((T, N), dtype=np.int64)
        elif self.kind == "rotating":
            index = (np.arange(T)[:, None] + np.arange(N)[None, :]) % P
        else:
            index = np.random.default_rng(self.seed).integers(P, size=(T, N))
        return ObjectiveTable(ObjectivePool.from_objectives(self.pool), index.astype(np.int64))


def make_pool(dim, size, rng, family="quadratic", monotone=True, concave=False, scale=1.0, gamma=1.0, hi=1.0):
    """``size`` random objectives from the shipped families."""
    if family == "linear":
        return tuple(linear_objective(rng.uniform(0.1, 1.0, dim) * scale) for _ in range(size))
    return tuple(make_quadratic(dim, rng, monotone=monotone, concave=concave, hi=hi, scale=scale, gamma=gamma)
                 for _ in range(size))


# ---------------------------------------------------------------------------
# comparator and regret


def total_objective(table: ObjectiveTable, T=None) -> QuadraticObjective:
    """``F(u) = sum_t (1/N) sum_i f_{t,i}(u)`` as a single quadratic."""
    a, H, b0 = table.round_means(T)
    return QuadraticObjective(a.sum(axis=0), H.sum(axis=0), float(b0.sum()))


def _best_on(F, pts):
    vals = F.value(pts)
    k = int(np.argmax(vals))
    return pts[k], float(vals[k])


def offline_best(table: ObjectiveTable, body: ConvexBody, resolution=1 / 200, mode="grid", T=None,
                 fw_steps=10_000):
    """Static comparator ``argmax_u F(u)`` over the body.

    Grid mode scans a lattice of spacing ``resolution`` and then a finer
    lattice around the winner.  FW mode runs ``fw_steps`` Frank-Wolfe ascent
    steps from the center and reports the better of the last and averaged
    iterates, a lower bound on the maximum.  Returns ``(u_star, value)``.
    """
    F = total_objective(table, T)
    if mode == "fw":
        x = body.center.copy()
        avg = np.zeros_like(x)
        for k in range(fw_steps):
            v = body._argmax(F.grad(x))
            x = x + 2.0 / (k + 2.0) * (v - x)
            avg += (x - avg) / (k + 1)
        cands = np.array([x, avg, *body.vertices()]) if body.dim <= 3 else np.array([x, avg])
        return _best_on(F, cands)
    if mode != "grid":
        raise ValueError(f"unknown comparator mode {mode!r}")
    if resolution > body.inradius / 4:
        raise ResolutionTooCoarse(f"spacing {resolution} exceeds r/4 = {body.inradius / 4:.4g}")
    u, best = None, -np.inf
    for pts in body.lattice(resolution):
        cand, val = _best_on(F, pts)
        if val > best:
            u, best = cand, val
    fine = body.local_lattice(u, resolution, resolution / 10)
    if len(fine):
        cand, val = _best_on(F, fine)
        if val > best:
            u, best = cand, val
    return u, best


def comparator_rounds(table: ObjectiveTable, u_star, T=None):
    """Per-round comparator rewards ``(1/N) sum_j f_{t,j}(u*)``."""
    a, H, b0 = table.round_means(T)
    u = np.asarray(u_star, dtype=float)
    return a @ u + 0.5 * np.einsum("d,tde,e->t", u, H, u) + b0


def alpha_regret(report, alpha, best, agent):
    """Cumulative alpha-regret curve of one agent.

    ``best`` holds the per-round comparator rewards (see ``comparator_rounds``);
    a scalar is read as the same comparator reward in every round.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    rewards = report.rewards if hasattr(report, "rewards") else np.asarray(report)
    T, N = rewards.shape
    if not 0 <= agent < N:
        raise AgentOutOfRange(f"agent {agent} not in [0, {N})")
    best = np.broadcast_to(np.asarray(best, dtype=float), (T,))
    return alpha * np.cumsum(best) - np.cumsum(rewards[:, agent])


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    clipped: bool


def fit_loglog(T_values, regrets) -> SlopeFit:
    """Least-squares fit of ``log regret`` on ``log T``; non-positive regrets are floored at 1."""
    T_values = np.asarray(T_values, dtype=float)
    regrets = np.asarray(regrets, dtype=float)
    if T_values.shape != regrets.shape or T_values.size < 4:
        raise ValueError("need at least 4 matching (T, regret) points")
    if np.any(np.diff(T_values) <= 0):
        raise ValueError("horizons must be strictly increasing")
    clipped = bool(np.any(regrets <= 0))
    if clipped:
        warnings.warn(NonPositiveRegret(f"non-positive regret {regrets.min():.4g} floored at 1"), stacklevel=2)
    slope, intercept = np.polyfit(np.log(T_values), np.log(np.where(regrets > 0, regrets, 1.0)), 1)
    return SlopeFit(float(slope), float(intercept), clipped)


def fit_loglog_slope(T_values, regrets) -> float:
    return fit_loglog(T_values, regrets).slope


# ---------------------------------------------------------------------------
# configuration


def _problem(problems, name, check, msg):
    try:
        ok = check()
    except TypeError:
        ok = False
    if not ok:
        problems.append((name, msg))


@dataclass
class NetworkConfig:
    kind: str = "cycle"
    n: int = 8
    rows: int | None = None
    edges: list | None = None


@dataclass
class BodyConfig:
    kind: str = "box"
    dim: int = 2
    lo: float = 0.0
    hi: float = 1.0
    budget: float = 1.0


@dataclass
class ObjectiveConfig:
    family: str = "quadratic"
    seed: int = 0
    monotone: bool = True
    concave: bool = True
    gamma: float = 1.0
    scale: float = 1.0
    noise_sigma: float = 0.0
    oracle_order: int | None = None
    anchor: list | None = None


@dataclass
class AdversaryConfig:
    kind: str = "rotating"
    pool_size: int = 5
    seed: int = 0


@dataclass
class AlgorithmConfig:
    variant: str = "alg1"
    case: str = "A1"
    theta: float = 1.0
    T: int = 1000
    curvature: float = 1.0
    delta_scale: float = 1.0
    alpha: float | None = None  # regret level; defaults to the case constant


@dataclass
class ComparatorConfig:
    mode: str = "grid"
    resolution: float = 1 / 200


@dataclass
class ExperimentConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    body: BodyConfig = field(default_factory=BodyConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    comparator: ComparatorConfig = field(default_factory=ComparatorConfig)
    seeds: list = field(default_factory=lambda: [0])
    run_id: str = "run"
    workers: int = 1

    @classmethod
    def from_dict(cls, raw):
        """Build and validate; every problem found is reported in one ``ConfigInvalid``."""
        problems = []
        if not isinstance(raw, dict):
            raise ConfigInvalid([("<root>", "config must be a JSON object")])
        sections = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            if key not in sections:
                problems.append((key, "unknown section"))
                continue
            sub = _SECTION_TYPES.get(key)
            if sub is None:
                kwargs[key] = value
                continue
            if not isinstance(value, dict):
                problems.append((key, "must be an object"))
                continue
            known = {f.name for f in fields(sub)}
            problems.extend((f"{key}.{k}", "unknown field") for k in value if k not in known)
            kwargs[key] = sub(**{k: v for k, v in value.items() if k in known})
        cfg = cls(**kwargs)
        if isinstance(cfg.seeds, int) and not isinstance(cfg.seeds, bool):
            cfg.seeds = [cfg.seeds]
        try:
            cfg.validate()
        except ConfigInvalid as exc:
            problems.extend(exc.problems)
        if problems:
            raise ConfigInvalid(problems)
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigInvalid([("<file>", f"invalid JSON: {exc}")]) from exc
        return cls.from_dict(raw)

    def to_dict(self):
        return asdict(self)

    def validate(self):
        p = []
        net, body, obj, adv, alg, cmp_ = (self.network, self.body, self.objective, self.adversary,
                                          self.algorithm, self.comparator)
        _problem(p, "network.kind", lambda: net.kind in ("cycle", "complete", "grid", "explicit"), f"unknown kind {net.kind!r}")
        _problem(p, "network.n", lambda: isinstance(net.n, int) and net.n >= 1, "must be a positive integer")
        _problem(p, "body.kind", lambda: body.kind in ("box", "simplex", "flat_simplex"), f"unknown kind {body.kind!r}")
        _problem(p, "body.dim", lambda: isinstance(body.dim, int) and body.dim >= 1, "must be a positive integer")
        if body.kind == "box":
            _problem(p, "body.hi", lambda: body.hi > body.lo, "must exceed lo")
        else:
            _problem(p, "body.budget", lambda: body.budget > 0, "must be positive")
        _problem(p, "objective.family", lambda: obj.family in ("quadratic", "linear"), f"unknown family {obj.family!r}")
        _problem(p, "objective.noise_sigma", lambda: obj.noise_sigma >= 0, "must be non-negative")
        _problem(p, "objective.gamma", lambda: 0 < obj.gamma <= 1, "must lie in (0, 1]")
        _problem(p, "adversary.kind", lambda: adv.kind in ADVERSARY_KINDS, f"unknown kind {adv.kind!r}")
        _problem(p, "adversary.pool_size", lambda: isinstance(adv.pool_size, int) and adv.pool_size >= 1,
                 "must be a positive integer")
        _problem(p, "algorithm.variant", lambda: alg.variant in agents.VARIANTS, f"unknown variant {alg.variant!r}")
        _problem(p, "algorithm.case", lambda: alg.case in CASES, f"unknown case {alg.case!r}")
        if alg.variant in agents.VARIANTS and alg.case in CASES:
            _problem(p, "algorithm.case", lambda: alg.case in agents.ALLOWED_CASES[alg.variant],
                     f"{alg.variant} supports {', '.join(agents.ALLOWED_CASES[alg.variant])}")
            _problem(p, "algorithm.theta", lambda: 0 <= alg.theta <= agents.THETA_MAX[alg.variant] + 1e-12,
                     f"must lie in [0, {agents.THETA_MAX[alg.variant]:.4g}] for {alg.variant}")
            want = 0 if alg.variant in agents.ZEROTH_ORDER else 1
            _problem(p, "objective.oracle_order", lambda: obj.oracle_order in (None, want),
                     f"{alg.variant} uses order-{want} oracles")
        if alg.case == "A2" and not any(x[0] == "body.kind" or x[0] == "body.dim" for x in p):
            _problem(p, "algorithm.case", lambda: _origin_inside(body),
                     "case A2 needs a body containing the origin")
        _problem(p, "algorithm.T", lambda: isinstance(alg.T, int) and alg.T >= 1, "must be a positive integer")
        _problem(p, "algorithm.alpha", lambda: alg.alpha is None or 0 < alg.alpha <= 1, "must lie in (0, 1]")
        _problem(p, "algorithm.delta_scale", lambda: alg.delta_scale > 0, "must be positive")
        _problem(p, "comparator.mode", lambda: cmp_.mode in ("grid", "fw"), f"unknown mode {cmp_.mode!r}")
        _problem(p, "comparator.resolution", lambda: cmp_.resolution > 0, "must be positive")
        _problem(p, "seeds", lambda: isinstance(self.seeds, list) and self.seeds and all(isinstance(s, int) for s in self.seeds),
                 "must be an integer or a non-empty list of integers")
        _problem(p, "workers", lambda: isinstance(self.workers, int) and self.workers >= 1, "must be a positive integer")
        if p:
            raise ConfigInvalid(p)

    def with_overrides(self, **changes):
        """Copy with ``section.field`` overrides, e.g. ``{"algorithm.T": 5000}``."""
        raw = self.to_dict()
        for key, value in changes.items():
            section, _, name = key.partition(".")
            if name:
                raw[section][name] = value
            else:
                raw[section] = value
        return ExperimentConfig.from_dict(raw)


def _origin_inside(body_cfg):
    try:
        return body_from_config(asdict(body_cfg)).contains_origin
    except ValueError:
        return True  # shape problems are reported by their own checks


_SECTION_TYPES = {
    "network": NetworkConfig,
    "body": BodyConfig,
    "objective": ObjectiveConfig,
    "adversary": AdversaryConfig,
    "algorithm": AlgorithmConfig,
    "comparator": ComparatorConfig,
}


# ---------------------------------------------------------------------------
# running


@dataclass
class RunOutcome:
    report: agents.RunReport
    run_id: str
    alpha: float
    case_alpha: float
    u_star: np.ndarray
    best_value: float
    curves: np.ndarray  # (N, T) cumulative alpha-regret
    comparator_cum: np.ndarray  # (T,) cumulative comparator reward

    def case_curves(self):
        """Regret curves at the case constant alpha instead of the configured level."""
        return self.curves - (self.alpha - self.case_alpha) * self.comparator_cum

    @property
    def final_regrets(self):
        return self.curves[:, -1]

    @property
    def mean_regret(self):
        return float(self.curves[:, -1].mean())


def build_problem(cfg: ExperimentConfig):
    """Body, gossip matrix, objective table and spec described by ``cfg``."""
    body = body_from_config(asdict(cfg.body))
    topo = topology_from_config({k: v for k, v in asdict(cfg.network).items() if v is not None})
    weights = metropolis_weights(topo)
    obj = cfg.objective
    pool = make_pool(body.dim, 1 if cfg.adversary.kind == "fixed" else cfg.adversary.pool_size,
                     np.random.default_rng(obj.seed), family=obj.family, monotone=obj.monotone,
                     concave=obj.concave, scale=obj.scale, gamma=obj.gamma, hi=_upper_corner(body))
    table = AdversarySpec(cfg.adversary.kind, pool, cfg.adversary.seed).table(cfg.algorithm.T, weights.n)
    anchor = obj.anchor
    if anchor is None and cfg.algorithm.case == "A3":
        anchor = body.low_anchor()
    spec = make_spec(cfg.algorithm.case, gamma=obj.gamma, curvature=cfg.algorithm.curvature,
                     anchor=anchor, dim=body.dim)
    return body, weights, table, spec


def _upper_corner(body):
    return float(np.max(body.vertices()))


def response_bound(variant, body, table, noise_sigma):
    """The per-response bound ``G`` (first order) or ``B0`` (value oracles) used by the schedule."""
    from .objectives import NOISE_CLIP

    if variant in agents.ZEROTH_ORDER:
        return table.pool.value_bound(body.radius) + NOISE_CLIP * noise_sigma
    return table.pool.grad_bound(body.radius) + NOISE_CLIP * noise_sigma * math.sqrt(body.dim)


def run_one(cfg: ExperimentConfig, seed: int, workers=None, problem=None, comparator=None) -> RunOutcome:
    body, weights, table, spec = problem or build_problem(cfg)
    alg = cfg.algorithm
    bound = response_bound(alg.variant, body, table, cfg.objective.noise_sigma)
    schedule = agents.make_schedule(alg.variant, alg.case, alg.theta, alg.T, bound, alg.delta_scale)
    report = agents.run(body, weights, table, spec, schedule, noise_sigma=cfg.objective.noise_sigma,
                        seed=seed, workers=workers or cfg.workers)
    if comparator is None:
        comparator = offline_best(table, body, cfg.comparator.resolution, cfg.comparator.mode)
    u_star, best_value = comparator
    per_round = comparator_rounds(table, u_star)
    alpha = alg.alpha if alg.alpha is not None else spec.alpha
    curves = np.stack([alpha_regret(report, alpha, per_round, i) for i in range(weights.n)])
    return RunOutcome(report, f"{cfg.run_id}-s{seed}", alpha, spec.alpha, np.asarray(u_star), best_value, curves,
                      np.cumsum(per_round))


def write_csv(outcome: RunOutcome, stream):
    """Per-(agent, round) rows in the fixed column order."""
    rep, s = outcome.report, outcome.report.schedule
    head = [outcome.run_id, s.variant, s.case, repr(s.theta), str(s.T), str(s.K), str(s.L),
            repr(s.eta), repr(s.eps), repr(s.delta), str(rep.n_agents)]
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_HEADER)
    seed = str(rep.seed)
    comm = rep.comm_cum.tolist()
    for i in range(rep.n_agents):
        rewards = rep.rewards[:, i].tolist()
        regret = outcome.curves[i].tolist()
        loo = rep.loo_cum[:, i].tolist()
        qry = rep.query_cum[:, i].tolist()
        w.writerows(
            head + [str(i), str(t + 1), repr(rewards[t]), repr(regret[t]), str(comm[t]), str(loo[t]), str(qry[t]), seed]
            for t in range(s.T)
        )


def csv_text(outcome: RunOutcome) -> str:
    buf = io.StringIO()
    write_csv(outcome, buf)
    return buf.getvalue()


def summary(outcome: RunOutcome, cfg: ExperimentConfig | None = None) -> dict:
    rep = outcome.report
    out = {
        "run_id": outcome.run_id,
        "seed": rep.seed,
        "schedule": rep.schedule.as_dict(),
        "feedback": rep.feedback,
        "alpha": outcome.alpha,
        "case_alpha": outcome.case_alpha,
        "u_star": outcome.u_star.tolist(),
        "best_value": outcome.best_value,
        "final_regret_per_agent": outcome.final_regrets.tolist(),
        "mean_final_regret": outcome.mean_regret,
        "comm_count": rep.comm_count,
        "loo_count": rep.loo_count,
        "loo_per_agent": rep.loo_per_agent.tolist(),
        "loo_bound_per_agent": rep.loo_bound_per_agent.tolist(),
        "query_count": rep.query_count,
        "nontrivial_queries": int(rep.nontrivial_queries.sum()),
        "max_residual_ratio": rep.max_residual_ratio,
        "projections_outside_radius": rep.projections_outside_radius,
        "meta": rep.meta,
    }
    if cfg is not None:
        out["config"] = cfg.to_dict()
    return out


def run_experiment(cfg: ExperimentConfig, out=None, workers=None) -> list[RunOutcome]:
    """Run every seed in ``cfg``; with ``out`` set, write ``<run_id>.csv`` and ``<run_id>.json`` per seed."""
    problem = build_problem(cfg)
    body, _, table, _ = problem
    comparator = offline_best(table, body, cfg.comparator.resolution, cfg.comparator.mode)
    outcomes = [run_one(cfg, seed, workers, problem, comparator) for seed in cfg.seeds]
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        for oc in outcomes:
            with open(out / f"{oc.run_id}.csv", "w", newline="") as fh:
                write_csv(oc, fh)
            (out / f"{oc.run_id}.json").write_text(json.dumps(summary(oc, cfg), indent=2, sort_keys=True))
    return outcomes


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepPoint:
    theta: float
    T: int
    seed: int
    K: int
    L: int
    comm_count: int
    loo_count: int
    query_count: int
    mean_regret: float
    max_residual_ratio: float


def _sweep_job(args):
    raw, seed = args
    cfg = ExperimentConfig.from_dict(raw)
    oc = run_one(cfg, seed, workers=1)
    rep, s = oc.report, oc.report.schedule
    return SweepPoint(s.theta, s.T, seed, s.K, s.L, rep.comm_count, rep.loo_count, rep.query_count,
                      oc.mean_regret, rep.max_residual_ratio)


def sweep(cfg: ExperimentConfig, thetas, horizons, workers=1, out=None):
    """Run every (theta, T, seed) combination as an independent job.

    Returns the sweep points and, per theta, the fitted log-log slopes of the
    seed-averaged regret, the communication count and the LOO count.
    """
    jobs = []
    for theta in thetas:
        for T in horizons:
            raw = cfg.with_overrides(**{"algorithm.theta": float(theta), "algorithm.T": int(T)}).to_dict()
            jobs.extend((raw, seed) for seed in cfg.seeds)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            points = list(ex.map(_sweep_job, jobs))
    else:
        points = [_sweep_job(j) for j in jobs]
    fits = {}
    for theta in thetas:
        rows = [p for p in points if p.theta == float(theta)]
        Ts = sorted({p.T for p in rows})
        mean = [np.mean([p.mean_regret for p in rows if p.T == T]) for T in Ts]
        entry = {"horizons": Ts, "mean_regret": [float(m) for m in mean]}
        if len(Ts) >= 4:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                fit = fit_loglog(Ts, mean)
            comm = [np.mean([p.comm_count for p in rows if p.T == T]) for T in Ts]
            loo = [np.mean([max(p.loo_count, 1) for p in rows if p.T == T]) for T in Ts]
            entry.update(regret_slope=fit.slope, regret_clipped=fit.clipped or bool(caught),
                         comm_slope=fit_loglog(Ts, comm).slope, loo_slope=fit_loglog(Ts, loo).slope)
        fits[float(theta)] = entry
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{cfg.run_id}-sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            names = [f.name for f in fields(SweepPoint)]
            w.writerow(names)
            w.writerows([repr(getattr(p, n)) if isinstance(getattr(p, n), float) else getattr(p, n) for n in names]
                        for p in points)
        (out / f"{cfg.run_id}-sweep.json").write_text(
            json.dumps({"config": cfg.to_dict(), "fits": {repr(k): v for k, v in fits.items()}}, indent=2, sort_keys=True))
    return points, fits
