"""Decentralized projection-free online learners.

All five drivers share one skeleton.  Time is split into outer blocks of
``K * L`` rounds.  Within a block every agent plays from a frozen decision
``x_m`` and accumulates oracle responses.  At the block boundary the agents
gossip ``(x, y~)`` once, take the step ``y = sum_j a_ij y~_j + eta * sum(o)``
and call the infeasible projection with tolerance ``eps``.  The variants
differ only in what is played and queried inside a block:

========  ==========  =============================================  =====
variant   cases       per-block behaviour                            L
========  ==========  =============================================  =====
alg1      A1, A2, A3  play h(x); boosted first-order query per round  1
alg2      A1          play x + delta v; value query at played point   1
alg3      A2, A3      one boosted first-order query per L rounds      >=1
alg4      A2, A3      play h(x); value query at boosted point + dv     1
alg5      A2, A3      one value query at boosted point + dv per L     >=1
========  ==========  =============================================  =====

Variants using values (alg2/4/5) work over the shrunk body so every
perturbed query stays feasible.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .counting import OpCounter
from .errors import (
    DeltaExceedsInteriorRadius,
    FeedbackViolation,
    InvariantViolation,
    ThetaOutOfRange,
)
from .geometry import ConvexBody, infeasible_project, loo_call_bound, sample_sphere_subspace, shrink
from .network import WeightMatrix, gossip
from .objectives import NOISE_CLIP, LinearizableSpec, ObjectiveTable, clip_to, clipped_noise

VARIANTS = ("alg1", "alg2", "alg3", "alg4", "alg5")
THETA_MAX = {"alg1": 1.0, "alg2": 1.0, "alg3": 2.0 / 3.0, "alg4": 1.0, "alg5": 0.8}
ALLOWED_CASES = {
    "alg1": ("A1", "A2", "A3"),
    "alg2": ("A1",),
    "alg3": ("A2", "A3"),
    "alg4": ("A2", "A3"),
    "alg5": ("A2", "A3"),
}
ZEROTH_ORDER = frozenset({"alg2", "alg4", "alg5"})


@dataclass(frozen=True)
class Schedule:
    variant: str
    case: str
    theta: float
    T: int
    K: int
    L: int
    eta: float
    eps: float
    delta: float
    T_pad: int

    @property
    def n_blocks(self):
        return self.T_pad // (self.K * self.L)

    @property
    def zeroth_order(self):
        return self.variant in ZEROTH_ORDER

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def make_schedule(variant, case, theta, T, G_or_B0=1.0, delta_scale=1.0) -> Schedule:
    """Block size, step size and tolerances for a trade-off parameter ``theta``.

    ``G_or_B0`` enters only the alg3 tolerance ``eps = K^2 eta^2 G^2``.
    ``delta_scale`` multiplies the smoothing radius ``T^(-theta/4)``.
    The horizon is padded up to a multiple of ``K * L``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if case not in ALLOWED_CASES[variant]:
        raise ValueError(f"{variant} does not support case {case}")
    if not (0.0 <= theta <= THETA_MAX[variant] + 1e-12):
        raise ThetaOutOfRange(f"{variant} needs 0 <= theta <= {THETA_MAX[variant]:.4g}, got {theta}")
    T = int(T)
    L, delta = 1, 0.0
    if variant == "alg1":
        K = math.ceil(T ** (1.0 - theta) - 1e-9)
        eta = 1.0 / math.sqrt(K * T)
        eps = K**2 * eta**2
    elif variant in ("alg2", "alg4"):
        K = math.ceil(T ** (1.0 - theta) - 1e-9)
        delta = delta_scale * T ** (-theta / 4.0)
        eta = delta / math.sqrt(K * T)
        eps = K**2 * eta**2 / delta**2
    elif variant == "alg3":
        K = math.ceil(T ** (1.0 - 1.5 * theta) - 1e-9)
        L = math.ceil(T ** (theta / 2.0) - 1e-9)
        eta = T ** (theta - 1.0)
        eps = K**2 * eta**2 * G_or_B0**2
    else:
        K = math.ceil(T ** (1.0 - 1.25 * theta) - 1e-9)
        delta = delta_scale * T ** (-theta / 4.0)
        L = math.ceil(T ** (theta / 4.0) - 1e-9)
        eta = T ** (theta / 2.0 - 1.0)
        eps = K**2 * eta**2 / delta**2
    K, L = max(K, 1), max(L, 1)
    T_pad = -(-T // (K * L)) * K * L
    return Schedule(variant, case, float(theta), T, K, L, eta, eps, delta, T_pad)


@dataclass
class RunReport:
    """Everything a run produced; ``rewards[t, i]`` is ``(1/N) sum_j f_{t,j}`` at agent ``i``'s action."""

    schedule: Schedule
    seed: int
    rewards: np.ndarray  # (T, N)
    played: np.ndarray  # (T, N, d)
    comm_count: int
    loo_per_agent: np.ndarray
    loo_bound_per_agent: np.ndarray
    queries_per_agent: np.ndarray
    comm_cum: np.ndarray  # (T,)
    loo_cum: np.ndarray  # (T, N)
    query_cum: np.ndarray  # (T, N)
    nontrivial_queries: np.ndarray  # (N,) queries made away from the played action
    feedback: str
    max_residual_ratio: float = 0.0
    projections_outside_radius: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_agents(self):
        return self.rewards.shape[1]

    @property
    def loo_count(self):
        return int(self.loo_per_agent.sum())

    @property
    def query_count(self):
        return int(self.queries_per_agent.sum())


# ---------------------------------------------------------------------------
# per-block behaviour


@dataclass
class _Context:
    variant: str
    spec: LinearizableSpec
    table: ObjectiveTable
    K: int
    L: int
    delta: float
    k: int
    basis: np.ndarray
    sigma: float
    bound: float  # per-response bound (G, or B0 for value oracles)
    dim: int


def _first_order(ctx, rng, idx, points):
    g = ctx.table.pool.grads(idx, points) + clipped_noise(rng, ctx.sigma, points.shape)
    return clip_to(g, ctx.bound)


def _zeroth_order(ctx, rng, idx, points):
    vals = ctx.table.pool.values(idx, points) + clipped_noise(rng, ctx.sigma, (len(idx), 1))[:, 0]
    return np.clip(vals, -ctx.bound, ctx.bound)


def _block_alg1(ctx, i, start, x, rng):
    K, d = ctx.K, ctx.dim
    xs = np.broadcast_to(x, (K, d))
    z = ctx.spec.sample_z(rng, K)
    queries = ctx.spec.query_point(z, xs)
    played = np.broadcast_to(ctx.spec.h(x), (K, d))
    idx = ctx.table.index[start : start + K, i]
    resp = _first_order(ctx, rng, idx, queries)
    return played, np.arange(K), queries, resp.sum(axis=0)


def _block_alg2(ctx, i, start, x, rng):
    K = ctx.K
    v = sample_sphere_subspace(ctx.basis, rng, K, check=False)
    played = ctx.spec.h(x) + ctx.delta * v
    idx = ctx.table.index[start : start + K, i]
    vals = _zeroth_order(ctx, rng, idx, played)
    est = (ctx.k / ctx.delta) * vals[:, None] * v
    return played, np.arange(K), played, est.sum(axis=0)


def _block_alg3(ctx, i, start, x, rng):
    K, L, d = ctx.K, ctx.L, ctx.dim
    played = np.tile(ctx.spec.h(x), (K * L, 1))
    z = ctx.spec.sample_z(rng, K)
    w = ctx.spec.query_point(z, np.broadcast_to(x, (K, d)))
    rows = np.arange(K) * L + rng.integers(L, size=K)
    played[rows] = w
    idx = ctx.table.index[start + rows, i]
    resp = _first_order(ctx, rng, idx, w)
    return played, rows, w, resp.sum(axis=0)


def _block_alg4(ctx, i, start, x, rng):
    K, d = ctx.K, ctx.dim
    played = np.broadcast_to(ctx.spec.h(x), (K, d))
    v = sample_sphere_subspace(ctx.basis, rng, K, check=False)
    z = ctx.spec.sample_z(rng, K)
    queries = ctx.spec.query_point(z, np.broadcast_to(x, (K, d))) + ctx.delta * v
    idx = ctx.table.index[start : start + K, i]
    vals = _zeroth_order(ctx, rng, idx, queries)
    est = (ctx.k / ctx.delta) * vals[:, None] * v
    return played, np.arange(K), queries, est.sum(axis=0)


def _block_alg5(ctx, i, start, x, rng):
    K, L, d = ctx.K, ctx.L, ctx.dim
    played = np.tile(ctx.spec.h(x), (K * L, 1))
    v = sample_sphere_subspace(ctx.basis, rng, K, check=False)
    z = ctx.spec.sample_z(rng, K)
    w_hat = ctx.spec.query_point(z, np.broadcast_to(x, (K, d))) + ctx.delta * v
    rows = np.arange(K) * L + rng.integers(L, size=K)
    played[rows] = w_hat
    idx = ctx.table.index[start + rows, i]
    vals = _zeroth_order(ctx, rng, idx, w_hat)
    est = (ctx.k / ctx.delta) * vals[:, None] * v
    return played, rows, w_hat, est.sum(axis=0)


_BLOCKS = {"alg1": _block_alg1, "alg2": _block_alg2, "alg3": _block_alg3, "alg4": _block_alg4, "alg5": _block_alg5}


def feedback_kind(variant, case):
    if variant == "alg1":
        return "semi-bandit" if case == "A1" else "full-information"
    return {"alg2": "bandit", "alg3": "semi-bandit", "alg4": "full-information", "alg5": "bandit"}[variant]


def agent_rngs(seed, n):
    """Independent per-agent streams derived from ``seed`` by agent index."""
    return [np.random.default_rng([int(seed), i]) for i in range(n)]


# ---------------------------------------------------------------------------
# the shared driver


def run(body: ConvexBody, weights: WeightMatrix, table: ObjectiveTable, spec: LinearizableSpec,
        schedule: Schedule, noise_sigma=0.0, seed=0, workers=1) -> RunReport:
    """Run ``schedule.variant`` against the objective table and return its report."""
    variant = schedule.variant
    if spec.case != schedule.case:
        raise ValueError(f"spec case {spec.case} does not match schedule case {schedule.case}")
    N, d = weights.n, body.dim
    K, L = schedule.K, schedule.L
    table = table.padded(schedule.T_pad)
    if table.index.shape[1] != N:
        raise ValueError("objective table and weight matrix disagree on the number of agents")

    if spec.case == "A2" and not body.contains_origin:
        raise ValueError("case A2 needs a body containing the origin")
    if spec.case == "A3" and spec.anchor is None:
        spec = spec.with_anchor(body.low_anchor())

    if schedule.zeroth_order:
        if schedule.delta >= body.inradius:
            raise DeltaExceedsInteriorRadius(
                f"delta={schedule.delta:.4g} is not below the interior radius {body.inradius:.4g}")
        work = shrink(body, schedule.delta)
        if spec.case in ("A2", "A3"):
            # contract toward the image of the anchor so boosted points stay in the shrunk body
            spec = spec.with_anchor(work.to_shrunk(spec.anchor))
        bound = table.pool.value_bound(body.radius) + NOISE_CLIP * noise_sigma
        G = body.affine_dim * bound / schedule.delta
    else:
        work = body
        bound = table.pool.grad_bound(body.radius) + NOISE_CLIP * noise_sigma * math.sqrt(d)
        G = bound

    ctx = _Context(variant, spec, table, K, L, schedule.delta, body.affine_dim, body.basis,
                   float(noise_sigma), bound, d)
    block_fn = _BLOCKS[variant]
    trivial = feedback_kind(variant, spec.case) != "full-information"
    eta, eps = schedule.eta, schedule.eps
    residual_cap = 2.0 * math.sqrt(3.0 * eps) + 2.0 * eta * K * G

    rngs = agent_rngs(seed, N)
    counter = OpCounter()
    agent_counters = [OpCounter() for _ in range(N)]
    x = np.tile(work.center, (N, 1))
    ytil = x.copy()
    T_pad, span = schedule.T_pad, K * L
    played = np.empty((T_pad, N, d))
    queried = np.zeros((T_pad, N), dtype=bool)
    comm_by_block = np.zeros(schedule.n_blocks, dtype=int)
    loo_by_block = np.zeros((schedule.n_blocks, N), dtype=int)
    loo_bound = np.zeros(N)
    nontrivial = np.zeros(N, dtype=int)
    worst_ratio = 0.0
    outside = 0

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    amap = pool.map if pool is not None else map

    def agent_block(i):
        return block_fn(ctx, i, start, x[i], rngs[i])

    def agent_project(i):
        return infeasible_project(work, mixed_x[i], y_next[i], eps, agent_counters[i])

    try:
        for m in range(schedule.n_blocks):
            start = m * span
            sums = np.empty((N, d))
            for i, (pl, rows, qpts, total) in enumerate(amap(agent_block, range(N))):
                played[start : start + span, i] = pl
                queried[start + rows, i] = True
                agent_counters[i].queries += len(rows)
                off = np.any(pl[rows] != qpts, axis=1)
                if trivial and off.any():
                    raise FeedbackViolation(f"{variant}: agent {i} queried away from its action in block {m}")
                nontrivial[i] += int(off.sum())
                if not (body.contains_rows(qpts, tol=1e-9).all() and body.contains_rows(pl, tol=1e-9).all()):
                    raise InvariantViolation(f"{variant}: agent {i} played or queried outside the feasible set in block {m}")
                sums[i] = total

            mixed = gossip(weights, np.hstack([x, ytil]), counter)
            mixed_x, mixed_y = mixed[:, :d], mixed[:, d:]
            y_next = mixed_y + eta * sums
            comm_by_block[m] = counter.comm

            for i, res in enumerate(amap(agent_project, range(N))):
                gap = float(np.sum((mixed_x[i] - y_next[i]) ** 2))
                loo_bound[i] += max(loo_call_bound(work.radius, eps, gap), 0.0)
                resid = float(np.linalg.norm(res.y_tilde - y_next[i]))
                if resid > residual_cap * (1 + 1e-9) + 1e-12:
                    raise InvariantViolation(
                        f"residual {resid:.3e} exceeds 2 sqrt(3 eps) + 2 eta K G = {residual_cap:.3e}")
                worst_ratio = max(worst_ratio, resid / residual_cap if residual_cap > 0 else 0.0)
                if not work.contains(res.x_feasible):
                    raise InvariantViolation(f"agent {i} left the feasible set after projection")
                outside += res.outside_radius
                x[i] = res.x_feasible
                ytil[i] = res.y_tilde
                loo_by_block[m, i] = agent_counters[i].loo
    finally:
        if pool is not None:
            pool.shutdown()

    T = schedule.T
    loo_per_agent = np.array([c.loo for c in agent_counters])
    if np.any(loo_per_agent > loo_bound + 1e-9):
        raise InvariantViolation("LOO calls exceeded the summed per-block bound")
    rewards = table.network_rewards(played[:T])
    blocks_done = np.arange(T_pad) // span
    end_of_block = (np.arange(T_pad) + 1) % span == 0
    comm_cum = np.where(end_of_block, comm_by_block[blocks_done], np.r_[0, comm_by_block][blocks_done])
    loo_cum = np.where(end_of_block[:, None], loo_by_block[blocks_done], np.vstack([np.zeros((1, N), int), loo_by_block])[blocks_done])
    return RunReport(
        schedule=schedule,
        seed=int(seed),
        rewards=rewards,
        played=played[:T],
        comm_count=counter.comm,
        loo_per_agent=loo_per_agent,
        loo_bound_per_agent=loo_bound,
        queries_per_agent=np.array([c.queries for c in agent_counters]),
        comm_cum=comm_cum[:T],
        loo_cum=loo_cum[:T],
        query_cum=np.cumsum(queried, axis=0)[:T],
        nontrivial_queries=nontrivial,
        feedback=feedback_kind(variant, spec.case),
        max_residual_ratio=worst_ratio,
        projections_outside_radius=int(outside),
        meta={"G": G, "response_bound": bound, "work_radius": work.radius, "anchor": None if spec.anchor is None else spec.anchor.tolist()},
    )


def _check(schedule, variant):
    if schedule.variant != variant:
        raise ValueError(f"schedule is for {schedule.variant}, expected {variant}")


def run_droculo(body, weights, table, spec, schedule, **kw) -> RunReport:
    """Decentralized online boosted gradient ascent with infeasible projections."""
    _check(schedule, "alg1")
    return run(body, weights, table, spec, schedule, **kw)


def run_bandit_trivial(body, weights, table, spec, schedule, **kw) -> RunReport:
    """Bandit feedback for monotone objectives over a general set (one-point estimates)."""
    _check(schedule, "alg2")
    return run(body, weights, table, spec, schedule, **kw)


def run_semibandit(body, weights, table, spec, schedule, **kw) -> RunReport:
    """Semi-bandit feedback for boosted cases: one exploratory round per inner block."""
    _check(schedule, "alg3")
    return run(body, weights, table, spec, schedule, **kw)


def run_zeroth_full(body, weights, table, spec, schedule, **kw) -> RunReport:
    """Value queries at perturbed boosted points, away from the played action."""
    _check(schedule, "alg4")
    return run(body, weights, table, spec, schedule, **kw)


def run_bandit_nontrivial(body, weights, table, spec, schedule, **kw) -> RunReport:
    """Bandit feedback for boosted cases: exploratory value query once per inner block."""
    _check(schedule, "alg5")
    return run(body, weights, table, spec, schedule, **kw)
