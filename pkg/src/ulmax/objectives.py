"""Test objectives, noisy query oracles and the boosted linearization oracles.

The shipped family is the quadratic ``f(x) = <a, x> + x^T H x / 2 + b0`` with
``H`` symmetric and entrywise non-positive, which makes ``f`` continuous
DR-submodular (gradient entrywise antitone) and so 1-weakly up-concave.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch
from .geometry import sample_ball_subspace

CASES = ("A1", "A2", "A3")
NOISE_CLIP = 6.0  # noise is clipped at this many standard deviations


@dataclass(frozen=True)
class QuadraticObjective:
    a: np.ndarray
    H: np.ndarray
    b0: float = 0.0
    monotone: bool = False
    gamma: float = 1.0

    @property
    def dim(self):
        return self.a.shape[0]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.a + 0.5 * np.einsum("...i,ij,...j->...", x, self.H, x) + self.b0

    def grad(self, x):
        return self.a + np.asarray(x, dtype=float) @ self.H

    __call__ = value

    @property
    def smoothness_L(self):
        return float(np.linalg.norm(self.H, 2))

    def lipschitz_M1(self, radius):
        """Bound on ``||grad f||`` over a body of the given radius."""
        return float(np.linalg.norm(self.a) + self.smoothness_L * radius)

    def value_bound(self, radius):
        """Bound on ``|f|`` over a body of the given radius."""
        return float(abs(self.b0) + np.linalg.norm(self.a) * radius + 0.5 * self.smoothness_L * radius**2)


def linear_objective(a, b0=0.0):
    a = np.asarray(a, dtype=float)
    return QuadraticObjective(a, np.zeros((a.size, a.size)), float(b0), monotone=bool(np.all(a >= 0)))


def zero_objective(dim):
    return QuadraticObjective(np.zeros(dim), np.zeros((dim, dim)), 0.0, monotone=True)


def make_quadratic(dim, rng, monotone=True, concave=False, hi=1.0, scale=1.0, offset="auto", gamma=1.0):
    """Random DR-submodular quadratic on ``[0, hi]^dim``.

    ``concave=True`` draws ``H = -B^T B`` with ``B >= 0`` (entrywise
    non-positive and negative semidefinite).  ``monotone=True`` picks ``a`` so
    the gradient stays non-negative on the whole cube; otherwise ``a`` is small
    enough that some partial derivatives change sign.  ``offset="auto"`` sets
    ``b0`` to the smallest value keeping ``f >= 0`` on the cube.
    """
    if concave:
        B = rng.uniform(0.0, 1.0, size=(dim, dim)) * scale / dim
        H = -B.T @ B
    else:
        U = rng.uniform(0.0, scale, size=(dim, dim))
        H = -0.5 * (U + U.T)
    H = 0.5 * (H + H.T)
    floor = -hi * H.sum(axis=1)  # = -H (hi * 1) >= 0
    if monotone:
        a = floor + rng.uniform(0.0, scale, size=dim)
    else:
        a = floor * rng.uniform(0.2, 0.8, size=dim)
    if offset == "auto":
        # <a, x> >= 0 on the cube and x^T H x >= hi^2 1^T H 1
        b0 = max(0.0, -0.5 * hi**2 * H.sum())
    else:
        b0 = float(offset)
    return QuadraticObjective(a, H, b0, monotone=monotone, gamma=gamma)


@dataclass(frozen=True)
class ObjectivePool:
    """Stacked coefficients of ``P`` quadratics for vectorized evaluation."""

    a: np.ndarray  # (P, d)
    H: np.ndarray  # (P, d, d)
    b0: np.ndarray  # (P,)

    @classmethod
    def from_objectives(cls, objs):
        return cls(
            np.array([o.a for o in objs], dtype=float),
            np.array([o.H for o in objs], dtype=float),
            np.array([o.b0 for o in objs], dtype=float),
        )

    def __len__(self):
        return self.a.shape[0]

    def __getitem__(self, p):
        return QuadraticObjective(self.a[p], self.H[p], float(self.b0[p]))

    def grads(self, idx, points):
        """Gradients of objectives ``idx[k]`` at ``points[k]``."""
        return self.a[idx] + np.einsum("kj,kji->ki", points, self.H[idx])

    def values(self, idx, points):
        quad = np.einsum("ki,kij,kj->k", points, self.H[idx], points)
        return np.einsum("ki,ki->k", points, self.a[idx]) + 0.5 * quad + self.b0[idx]

    def mean(self, idx, weights=None):
        """The average objective over the multiset ``idx``."""
        idx = np.asarray(idx).ravel()
        if weights is None:
            counts = np.bincount(idx, minlength=len(self)).astype(float)
        else:
            counts = np.bincount(idx, weights=weights, minlength=len(self))
        w = counts / counts.sum()
        return QuadraticObjective(w @ self.a, np.einsum("p,pij->ij", w, self.H), float(w @ self.b0))

    def grad_bound(self, radius):
        return max(self[p].lipschitz_M1(radius) for p in range(len(self)))

    def value_bound(self, radius):
        return max(self[p].value_bound(radius) for p in range(len(self)))


@dataclass(frozen=True)
class ObjectiveTable:
    """Which pool member agent ``i`` faces at round ``t``: ``pool[index[t, i]]``."""

    pool: ObjectivePool
    index: np.ndarray  # (T, N) integer

    @property
    def horizon(self):
        return self.index.shape[0]

    @property
    def n_agents(self):
        return self.index.shape[1]

    def padded(self, T_pad):
        """Extend to ``T_pad`` rounds with the zero objective appended to the pool."""
        T = self.horizon
        if T_pad < T:
            raise ValueError("cannot pad to a shorter horizon")
        if T_pad == T:
            return self
        d = self.pool.a.shape[1]
        pool = ObjectivePool(
            np.vstack([self.pool.a, np.zeros((1, d))]),
            np.concatenate([self.pool.H, np.zeros((1, d, d))]),
            np.append(self.pool.b0, 0.0),
        )
        extra = np.full((T_pad - T, self.n_agents), len(self.pool), dtype=self.index.dtype)
        return ObjectiveTable(pool, np.vstack([self.index, extra]))

    def round_means(self, T=None):
        """Coefficients of the network average ``(1/N) sum_j f_{t,j}`` for each round."""
        idx = self.index[: T if T is not None else self.horizon]
        return self.pool.a[idx].mean(axis=1), self.pool.H[idx].mean(axis=1), self.pool.b0[idx].mean(axis=1)

    def network_rewards(self, points):
        """``rewards[t, i] = (1/N) sum_j f_{t,j}(points[t, i])`` for ``points`` of shape (T, N, d)."""
        T = points.shape[0]
        a, H, b0 = self.round_means(T)
        lin = np.einsum("tnd,td->tn", points, a)
        quad = np.einsum("tnd,tde,tne->tn", points, H, points)
        return lin + 0.5 * quad + b0[:, None]


# ---------------------------------------------------------------------------
# noisy oracles


def clipped_noise(rng, sigma, shape):
    """Isotropic Gaussian noise with each vector's norm clipped at ``6 sigma sqrt(dim)``.

    Radial clipping is odd-symmetric, so the clipped noise is still exactly
    mean zero.  ``shape[-1]`` is the vector dimension; pass ``(n, 1)`` for
    scalar noise (clipped at ``6 sigma``).
    """
    if sigma == 0:
        return np.zeros(shape)
    xi = sigma * rng.standard_normal(shape)
    radius = NOISE_CLIP * sigma * math.sqrt(shape[-1])
    norms = np.linalg.norm(xi, axis=-1, keepdims=True)
    return xi * np.minimum(1.0, radius / np.maximum(norms, 1e-300))


def clip_to(v, bound):
    """Scale rows of ``v`` down to norm ``bound``; a no-op when the bound is respected."""
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    return v * np.minimum(1.0, bound / np.maximum(norms, 1e-300))


@dataclass
class QueryOracle:
    """Noisy zeroth-order (value) or first-order (gradient) access to ``target``."""

    target: QuadraticObjective
    order: int
    noise_sigma: float = 0.0
    bound: float | None = None
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    @classmethod
    def for_body(cls, target, order, noise_sigma, radius, rng):
        if order == 1:
            bound = target.lipschitz_M1(radius) + NOISE_CLIP * noise_sigma * math.sqrt(target.dim)
        else:
            bound = target.value_bound(radius) + NOISE_CLIP * noise_sigma
        return cls(target, order, noise_sigma, bound, rng)

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape[-1] != self.target.dim:
            raise DimensionMismatch(f"query point has dim {w.shape[-1]}, objective has {self.target.dim}")
        if self.order == 1:
            out = self.target.grad(w) + clipped_noise(self.rng, self.noise_sigma, w.shape)
            return out if self.bound is None else clip_to(out, self.bound)
        vals = np.atleast_1d(self.target.value(w))
        out = vals + clipped_noise(self.rng, self.noise_sigma, vals.shape + (1,))[..., 0]
        if self.bound is not None:
            out = np.clip(out, -self.bound, self.bound)
        return float(out[0]) if w.ndim == 1 else out


# ---------------------------------------------------------------------------
# z laws for the boosted oracles


def z_mono_origin_cdf(z, gamma):
    return (np.exp(gamma * (np.asarray(z) - 1.0)) - math.exp(-gamma)) / (1.0 - math.exp(-gamma))


def z_mono_origin_pdf(z, gamma):
    return gamma * np.exp(gamma * (np.asarray(z) - 1.0)) / (1.0 - math.exp(-gamma))


def z_mono_origin_inv(u, gamma):
    return 1.0 + np.log(np.asarray(u) * (1.0 - math.exp(-gamma)) + math.exp(-gamma)) / gamma


def sample_z_mono_origin(gamma, rng, size=None):
    """Draw from the law with density ``gamma e^{gamma (z-1)} / (1 - e^{-gamma})`` on ``[0, 1]``."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    return np.clip(z_mono_origin_inv(rng.random(size), gamma), 0.0, 1.0)


def z_nonmono_cdf(z):
    return ((1.0 - np.asarray(z) / 2.0) ** -2 - 1.0) / 3.0


def z_nonmono_pdf(z):
    return 1.0 / (3.0 * (1.0 - np.asarray(z) / 2.0) ** 3)


def z_nonmono_inv(u):
    return 2.0 * (1.0 - (1.0 + 3.0 * np.asarray(u)) ** -0.5)


def sample_z_nonmono(rng, size=None):
    """Draw from the law with density ``1 / (3 (1 - z/2)^3)`` on ``[0, 1]``."""
    return np.clip(z_nonmono_inv(rng.random(size)), 0.0, 1.0)


# ---------------------------------------------------------------------------
# upper-linearizable cases


@dataclass(frozen=True)
class LinearizableSpec:
    """Constants and maps of one upper-linearizable function class.

    ``anchor`` is the fixed point the boosted query contracts toward: the
    origin for A2 and the low point for A3.  It is unused for A1.
    """

    case: str
    alpha: float
    beta: float
    gamma: float = 1.0
    anchor: np.ndarray | None = None
    curvature: float = 1.0

    @property
    def trivial_query(self):
        return self.case == "A1"

    @property
    def boosted_kind(self):
        return {"A1": "BQM", "A2": "BQM0", "A3": "BQN"}[self.case]

    def h(self, x):
        if self.case == "A3":
            return 0.5 * (np.asarray(x) + self.anchor)
        return np.asarray(x)

    def query_point(self, z, x):
        """Where the boosted oracle queries for a draw ``z`` (vectorized over rows)."""
        x = np.asarray(x, dtype=float)
        if self.case == "A1":
            return x
        z = np.asarray(z, dtype=float)
        if z.ndim and x.ndim > 1:
            z = z[:, None]
        if self.case == "A2":
            return self.anchor + z * (x - self.anchor)
        return self.anchor + 0.5 * z * (x - self.anchor)

    def sample_z(self, rng, size=None):
        if self.case == "A1":
            return np.ones(size) if size is not None else 1.0
        if self.case == "A2":
            return sample_z_mono_origin(self.gamma, rng, size)
        return sample_z_nonmono(rng, size)

    def density(self, z):
        if self.case == "A2":
            return z_mono_origin_pdf(z, self.gamma)
        if self.case == "A3":
            return z_nonmono_pdf(z)
        raise ValueError("A1 has no z law")

    def with_anchor(self, anchor):
        return replace(self, anchor=np.asarray(anchor, dtype=float))


def make_spec(case, gamma=1.0, curvature=1.0, anchor=None, dim=None):
    """Constants for case A1 (monotone, general set), A2 (monotone, 0 in K) or A3 (non-monotone)."""
    if case not in CASES:
        raise ValueError(f"case must be one of {CASES}")
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if case == "A1":
        den = 1.0 + curvature * gamma**2
        return LinearizableSpec("A1", gamma**2 / den, gamma / den, gamma, None, curvature)
    if case == "A2":
        anc = np.zeros(dim) if anchor is None else np.asarray(anchor, dtype=float)
        return LinearizableSpec("A2", 1.0 - math.exp(-gamma), (1.0 - math.exp(-gamma)) / gamma, gamma, anc)
    if anchor is None:
        raise ValueError("case A3 needs the low anchor point")
    anc = np.asarray(anchor, dtype=float)
    return LinearizableSpec("A3", (1.0 - float(np.max(np.abs(anc)))) / 4.0, 3.0 / 8.0, 1.0, anc)


def boosted_query(spec: LinearizableSpec, oracle: QueryOracle, x, rng, size=None):
    """One unbiased sample of the linearization direction at ``x``.

    Returns ``(sample, query_point)``; for A1 the query point is ``x`` itself.
    With ``size`` set, draws ``size`` independent samples at once (rows).
    """
    x = np.asarray(x, dtype=float)
    if oracle.order != 1:
        raise ValueError("boosted queries need a first-order oracle")
    if x.shape[-1] != oracle.target.dim:
        raise DimensionMismatch(f"x has dim {x.shape[-1]}, objective has {oracle.target.dim}")
    if size is not None:
        x = np.broadcast_to(x, (size, x.shape[-1]))
    w = spec.query_point(spec.sample_z(rng, size), x)
    return oracle(w), w


def _gauss_legendre01(n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def boosted_grad_exact(spec: LinearizableSpec, f: QuadraticObjective, x, n_quad=256):
    """Expected boosted gradient at ``x`` by Gauss-Legendre quadrature over ``z``."""
    x = np.asarray(x, dtype=float)
    if spec.case == "A1":
        return f.grad(x)
    if n_quad < 64:
        raise ValueError("n_quad must be at least 64")
    z, w = _gauss_legendre01(n_quad)
    pts = spec.query_point(z, np.broadcast_to(x, (n_quad, x.size)))
    return (w * spec.density(z)) @ f.grad(pts)


def check_linearizable(spec: LinearizableSpec, f: QuadraticObjective, x, y, n_quad=256):
    """Slack ``beta <g(f, x), y - x> - (alpha f(y) - f(h(x)))``; non-negative when the inequality holds."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    g = boosted_grad_exact(spec, f, x, n_quad)
    return float(spec.beta * g @ (y - x) - (spec.alpha * f.value(y) - f.value(spec.h(x))))


# ---------------------------------------------------------------------------
# smoothing


def one_point_grad(o, v, k, delta):
    """``(k / delta) o v``: one-point estimate of the smoothed gradient."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return (k / delta) * o * np.asarray(v, dtype=float)


def smoothed_value_mc(f, x, delta, basis, n, rng):
    """Monte-Carlo estimate of ``E f(x + delta v)`` over ``v`` uniform in the unit ball of ``span(basis)``."""
    x = np.asarray(x, dtype=float)
    if delta == 0:
        return float(f.value(x))
    v = sample_ball_subspace(basis, rng, n)
    return float(np.mean(f.value(x + delta * v)))
