"""Convex feasible sets accessed through a linear optimization oracle.

Every body exposes the same small surface: ``loo`` (argmax of a linear
function), ``contains``, the radius ``R = max ||x||``, an interior ball
``(center, inradius)`` relative to the affine hull, and an orthonormal basis
of the hull's direction space.  ``infeasible_project`` is built purely on
``loo`` calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .counting import OpCounter
from .errors import DegenerateBasis, DeltaTooLarge, IterationCapExceeded

_HARD_CAP = 10_000_000


def _axis(a, b, h):
    n = int(math.floor((b - a) / h + 1e-9))
    pts = a + h * np.arange(n + 1)
    return pts if pts[-1] >= b - 1e-12 else np.append(pts, b)


class ConvexBody:
    """Base class; subclasses implement ``_argmax`` and ``contains``."""

    dim: int
    radius: float
    center: np.ndarray
    inradius: float
    affine_dim: int
    contains_origin: bool

    def loo(self, direction, counter: OpCounter | None = None):
        """Return ``argmax_{u in K} <direction, u>``; ties resolve deterministically."""
        if counter is not None:
            counter.loo += 1
        return self._argmax(np.asarray(direction, dtype=float))

    def _argmax(self, direction):
        raise NotImplementedError

    def contains(self, x, tol=1e-9):
        raise NotImplementedError

    def sample(self, rng, n):
        """``n`` random points of the body (not necessarily uniform)."""
        raise NotImplementedError

    def vertices(self):
        raise NotImplementedError

    def max_norm_affine(self, scale, shift):
        """``max_{x in K} ||scale * x + shift||``, attained at a vertex."""
        verts = self.vertices() * scale + shift
        return float(np.max(np.linalg.norm(verts, axis=1)))

    @property
    def basis(self):
        """Orthonormal basis of the direction space of the affine hull, shape ``(k, d)``."""
        return np.eye(self.dim)

    def low_anchor(self):
        """A point minimizing ``||z||_inf`` over the body."""
        raise NotImplementedError

    def lattice(self, h):
        """Yield chunks of the lattice points of spacing ``h`` that lie in the body."""
        lo, hi = self.bounding_box()
        axes = [_axis(a, b, h) for a, b in zip(lo, hi)]
        for first in axes[0]:
            rest = np.meshgrid(*axes[1:], indexing="ij") if self.dim > 1 else []
            pts = np.column_stack([np.full(rest[0].size if rest else 1, first)] + [r.ravel() for r in rest])
            keep = self.contains_rows(pts)
            if keep.any():
                yield pts[keep]

    def local_lattice(self, u, h, step):
        """Points of the body within ``h`` of ``u`` along the affine hull, spacing ``step``."""
        offs = np.arange(-h, h + 0.5 * step, step)
        k = self.affine_dim
        grid = np.stack(np.meshgrid(*[offs] * k, indexing="ij"), axis=-1).reshape(-1, k)
        pts = np.asarray(u) + grid @ self.basis
        return pts[self.contains_rows(pts)]

    def contains_rows(self, pts, tol=1e-9):
        return np.array([self.contains(p, tol) for p in pts], dtype=bool)

    def bounding_box(self):
        v = self.vertices()
        return v.min(axis=0), v.max(axis=0)


class Box(ConvexBody):
    """The cube ``[lo, hi]^d``."""

    def __init__(self, dim, lo=0.0, hi=1.0):
        if hi <= lo:
            raise ValueError("box needs hi > lo")
        self.dim = int(dim)
        self.lo = float(lo)
        self.hi = float(hi)
        self.radius = math.sqrt(self.dim) * max(abs(self.lo), abs(self.hi))
        self.center = np.full(self.dim, 0.5 * (self.lo + self.hi))
        self.inradius = 0.5 * (self.hi - self.lo)
        self.affine_dim = self.dim
        self.contains_origin = self.lo <= 0.0 <= self.hi

    def __repr__(self):
        return f"Box(dim={self.dim}, lo={self.lo}, hi={self.hi})"

    def _argmax(self, direction):
        return np.where(direction > 0, self.hi, self.lo)

    def contains(self, x, tol=1e-9):
        x = np.asarray(x)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def contains_rows(self, pts, tol=1e-9):
        return np.all((pts >= self.lo - tol) & (pts <= self.hi + tol), axis=1)

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def vertices(self):
        grids = np.array(np.meshgrid(*[[self.lo, self.hi]] * self.dim, indexing="ij"))
        return grids.reshape(self.dim, -1).T

    def max_norm_affine(self, scale, shift):
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (self.dim,))
        per = np.maximum(np.abs(scale * self.lo + shift), np.abs(scale * self.hi + shift))
        return float(np.linalg.norm(per))

    def low_anchor(self):
        return np.full(self.dim, min(max(0.0, self.lo), self.hi))


class Simplex(ConvexBody):
    """Budget simplex ``{x >= lo*1, sum(x - lo) <= budget}``."""

    def __init__(self, dim, lo=0.0, budget=1.0):
        if budget <= 0:
            raise ValueError("simplex needs a positive budget")
        self.dim = int(dim)
        self.lo = float(lo)
        self.budget = float(budget)
        d = self.dim
        rho = self.budget / (d + math.sqrt(d))
        self.center = np.full(d, self.lo + rho)
        self.inradius = rho
        self.affine_dim = d
        self.radius = self.max_norm_affine(1.0, 0.0)
        self.contains_origin = self.contains(np.zeros(d))

    def __repr__(self):
        return f"Simplex(dim={self.dim}, lo={self.lo}, budget={self.budget})"

    def _argmax(self, direction):
        out = np.full(self.dim, self.lo)
        j = int(np.argmax(direction))
        if direction[j] > 0:
            out[j] += self.budget
        return out

    def contains(self, x, tol=1e-9):
        y = np.asarray(x) - self.lo
        return bool(np.all(y >= -tol) and y.sum() <= self.budget + tol)

    def contains_rows(self, pts, tol=1e-9):
        y = pts - self.lo
        return np.all(y >= -tol, axis=1) & (y.sum(axis=1) <= self.budget + tol)

    def sample(self, rng, n):
        w = rng.dirichlet(np.ones(self.dim + 1), size=n)[:, : self.dim]
        return self.lo + self.budget * w

    def vertices(self):
        return self.lo + np.vstack([np.zeros(self.dim), self.budget * np.eye(self.dim)])

    def low_anchor(self):
        if self.lo >= 0:
            return np.full(self.dim, self.lo)
        zero = np.zeros(self.dim)
        return zero if self.contains(zero) else self.center.copy()


class FlatSimplex(ConvexBody):
    """Scaled probability simplex ``{x >= lo*1, sum(x - lo) = budget}``; affine dim ``d - 1``."""

    def __init__(self, dim, lo=0.0, budget=1.0):
        if dim < 2:
            raise ValueError("flat simplex needs dim >= 2")
        self.dim = int(dim)
        self.lo = float(lo)
        self.budget = float(budget)
        d = self.dim
        self.center = np.full(d, self.lo + self.budget / d)
        self.inradius = self.budget / math.sqrt(d * (d - 1))
        self.affine_dim = d - 1
        self.radius = self.max_norm_affine(1.0, 0.0)
        self.contains_origin = False
        # orthonormal basis of {v : sum(v) = 0}
        q, _ = np.linalg.qr(np.eye(d) - 1.0 / d)
        self._basis = q[:, : d - 1].T.copy()

    def __repr__(self):
        return f"FlatSimplex(dim={self.dim}, lo={self.lo}, budget={self.budget})"

    @property
    def basis(self):
        return self._basis

    def _argmax(self, direction):
        out = np.full(self.dim, self.lo)
        out[int(np.argmax(direction))] += self.budget
        return out

    def contains(self, x, tol=1e-9):
        y = np.asarray(x) - self.lo
        return bool(np.all(y >= -tol) and abs(y.sum() - self.budget) <= tol)

    def contains_rows(self, pts, tol=1e-9):
        y = pts - self.lo
        return np.all(y >= -tol, axis=1) & (np.abs(y.sum(axis=1) - self.budget) <= tol)

    def lattice(self, h):
        # lattice on the first d-1 coordinates; the last is pinned by the budget
        d = self.dim
        sub = Simplex(d - 1, self.lo, self.budget)
        for pts in sub.lattice(h):
            last = self.lo + self.budget - (pts - self.lo).sum(axis=1)
            yield np.column_stack([pts, last])

    def sample(self, rng, n):
        return self.lo + self.budget * rng.dirichlet(np.ones(self.dim), size=n)

    def vertices(self):
        return self.lo + self.budget * np.eye(self.dim)

    def low_anchor(self):
        return self.center.copy()


class ShrunkBody(ConvexBody):
    """``(1 - delta/r) K + (delta/r) c`` for a base body ``K`` with interior ball ``(c, r)``."""

    def __init__(self, base: ConvexBody, delta: float):
        if not 0.0 <= delta < base.inradius:
            raise DeltaTooLarge(f"delta={delta} must lie in [0, r={base.inradius})")
        self.base = base
        self.delta = float(delta)
        self.shift_weight = self.delta / base.inradius
        self.scale = 1.0 - self.shift_weight
        self.offset = self.shift_weight * base.center
        self.dim = base.dim
        self.center = base.center.copy()
        self.inradius = self.scale * base.inradius
        self.affine_dim = base.affine_dim
        self.radius = base.max_norm_affine(self.scale, self.offset)
        self.contains_origin = self.contains(np.zeros(self.dim))

    def __repr__(self):
        return f"ShrunkBody({self.base!r}, delta={self.delta})"

    @property
    def basis(self):
        return self.base.basis

    def to_shrunk(self, u):
        """Image of a base-body point under the shrinking map."""
        return self.scale * np.asarray(u) + self.offset

    def _argmax(self, direction):
        return self.scale * self.base._argmax(direction) + self.offset

    def contains(self, x, tol=1e-9):
        return self.base.contains((np.asarray(x) - self.offset) / self.scale, tol=tol / self.scale)

    def contains_rows(self, pts, tol=1e-9):
        return self.base.contains_rows((np.asarray(pts) - self.offset) / self.scale, tol=tol / self.scale)

    def lattice(self, h):
        for pts in self.base.lattice(h / self.scale):
            yield self.to_shrunk(pts)

    def sample(self, rng, n):
        return self.to_shrunk(self.base.sample(rng, n))

    def vertices(self):
        return self.to_shrunk(self.base.vertices())

    def max_norm_affine(self, scale, shift):
        return self.base.max_norm_affine(scale * self.scale, scale * self.offset + shift)

    def low_anchor(self):
        return self.to_shrunk(self.base.low_anchor())


def shrink(body: ConvexBody, delta: float) -> ShrunkBody:
    return ShrunkBody(body, delta)


def body_from_config(cfg) -> ConvexBody:
    kind = cfg.get("kind")
    dim = int(cfg["dim"])
    lo = float(cfg.get("lo", 0.0))
    if kind == "box":
        return Box(dim, lo, float(cfg.get("hi", 1.0)))
    if kind == "simplex":
        return Simplex(dim, lo, float(cfg.get("budget", 1.0)))
    if kind == "flat_simplex":
        return FlatSimplex(dim, lo, float(cfg.get("budget", 1.0)))
    raise ValueError(f"unknown body kind {kind!r}")


# ---------------------------------------------------------------------------
# infeasible projection


@dataclass
class IpResult:
    x_feasible: np.ndarray
    y_tilde: np.ndarray
    loo_calls: int
    outside_radius: bool = False


def loo_call_bound(radius, eps, dist_sq):
    """Worst-case LOO calls for one infeasible projection from ``||x0 - y0||^2 = dist_sq``."""
    first = math.ceil(27.0 * radius**2 / eps - 2.0)
    return first * max(1.0, dist_sq * (dist_sq - eps) / (4.0 * eps**2) + 1.0)


def infeasible_project(body: ConvexBody, x0, y0, eps, counter: OpCounter | None = None):
    """Find ``(x, y~)`` with ``x`` feasible, ``||x - y~||^2 <= 3 eps`` and ``y~`` no farther than ``y0`` from any point of the body.

    Frank-Wolfe with exact line search on ``||w - y0||^2`` started at ``x0``.
    Stops when ``w`` is within ``sqrt(3 eps)`` of ``y0`` (returning ``y0``
    itself) or when the half duality gap ``<y0 - w, v - w>`` drops to ``eps``;
    in the latter case ``y~`` is moved from ``w`` toward ``y0`` by
    ``sigma = max(0, 2 eps / d^2 - 1)``, which keeps ``y~`` dominating ``y0``.
    """
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if eps <= 0:
        raise ValueError("eps must be positive")
    diff = y0 - x0
    bound = loo_call_bound(body.radius, eps, float(diff @ diff))
    cap = min(max(math.ceil(bound), 1), _HARD_CAP)
    w = x0.copy()
    calls = 0
    try:
        while True:
            diff = y0 - w
            d2 = float(diff @ diff)
            if d2 <= 3.0 * eps:
                y_tilde = y0.copy()
                break
            if calls >= cap:
                raise IterationCapExceeded(f"{calls} LOO calls without meeting the stopping rule")
            v = body._argmax(diff)
            calls += 1
            vw = v - w
            gap = float(diff @ vw)
            if gap <= eps:
                sigma = max(0.0, 2.0 * eps / d2 - 1.0)
                y_tilde = w + sigma * diff
                break
            w = w + min(1.0, gap / float(vw @ vw)) * vw
    finally:
        if counter is not None:
            counter.loo += calls
    return IpResult(w, y_tilde, calls, bool(np.linalg.norm(y_tilde) > body.radius + 1e-12))


# ---------------------------------------------------------------------------
# sampling in the affine hull


def sample_sphere_subspace(basis, rng, size=None, check=True):
    """Uniform unit vector(s) in ``span(basis)``; ``basis`` has orthonormal rows."""
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    k = basis.shape[0]
    if k == 0 or basis.size == 0:
        raise DegenerateBasis("subspace has dimension 0")
    if check and not np.allclose(basis @ basis.T, np.eye(k), atol=1e-10, rtol=0):
        raise DegenerateBasis("basis rows are not orthonormal")
    n = 1 if size is None else int(size)
    g = rng.standard_normal((n, k))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    out = g @ basis
    return out[0] if size is None else out


def sample_ball_subspace(basis, rng, size):
    """Uniform points in the unit ball of ``span(basis)``."""
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    k = basis.shape[0]
    dirs = sample_sphere_subspace(basis, rng, size)
    radii = rng.random(size) ** (1.0 / k)
    return dirs * radii[:, None]
