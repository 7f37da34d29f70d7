"""Simulated communication layer: graphs, gossip matrices and consensus steps."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .counting import OpCounter
from .errors import (
    DimensionMismatch,
    InvalidWeightMatrix,
    NoConvergence,
    TopologyDisconnected,
)

_STOCH_TOL = 1e-12


@dataclass(frozen=True)
class Topology:
    """Undirected graph on ``n_nodes`` nodes; self-loops are implicit."""

    n_nodes: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be positive")
        norm = set()
        for e in self.edges:
            i, j = sorted(int(v) for v in e)
            if i == j:
                raise ValueError(f"self-loop ({i}, {j}) must not be stored")
            if j >= self.n_nodes or i < 0:
                raise ValueError(f"edge ({i}, {j}) out of range for {self.n_nodes} nodes")
            norm.add((i, j))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, n, edges):
        pairs = [tuple(e) for e in edges]
        keys = [tuple(sorted(p)) for p in pairs]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate edges")
        return cls(n, frozenset(keys))

    @classmethod
    def cycle(cls, n):
        if n <= 2:
            return cls.complete(n)
        return cls(n, frozenset((i, (i + 1) % n) for i in range(n)))

    @classmethod
    def complete(cls, n):
        return cls(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))

    @classmethod
    def grid(cls, rows, cols):
        edges = set()
        for r in range(rows):
            for c in range(cols):
                k = r * cols + c
                if c + 1 < cols:
                    edges.add((k, k + 1))
                if r + 1 < rows:
                    edges.add((k, k + cols))
        return cls(rows * cols, frozenset(edges))

    def degree(self, i):
        return sum(1 for e in self.edges if i in e)

    def neighbors(self, i):
        """Neighbor set including ``i`` itself."""
        out = {i}
        for a, b in self.edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return out

    def is_connected(self):
        adj = {i: set() for i in range(self.n_nodes)}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in adj[u] - seen:
                seen.add(v)
                queue.append(v)
        return len(seen) == self.n_nodes


def topology_from_config(cfg) -> Topology:
    """Build a topology from ``{"kind": ..., "n": ..., "edges": ...}``."""
    kind = cfg.get("kind")
    n = int(cfg.get("n", 0))
    if kind == "cycle":
        return Topology.cycle(n)
    if kind == "complete":
        return Topology.complete(n)
    if kind == "grid":
        rows = int(cfg.get("rows", int(round(np.sqrt(n)))))
        if rows <= 0 or n % rows:
            raise ValueError(f"grid with n={n} needs rows dividing n")
        return Topology.grid(rows, n // rows)
    if kind == "explicit":
        return Topology.from_edges(n, cfg.get("edges", []))
    raise ValueError(f"unknown topology kind {kind!r}")


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric doubly stochastic gossip matrix supported on a topology."""

    a: np.ndarray
    lambda2: float
    topology: Topology | None = None

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def second_modulus(self):
        """Second-largest eigenvalue modulus, the true per-step contraction factor."""
        ev = np.linalg.eigvalsh(self.a - np.full_like(self.a, 1.0 / self.n))
        return float(np.max(np.abs(ev)))

    @classmethod
    def from_matrix(cls, a, topology=None):
        a = np.array(a, dtype=float)
        validate_weights(a, topology)
        if topology is not None and not topology.is_connected():
            raise TopologyDisconnected("weight matrix topology is not connected")
        lam = second_eigenvalue(a)
        if lam >= 1.0 - 1e-9:
            raise TopologyDisconnected(f"lambda2 = {lam:.6g} is not < 1")
        a.setflags(write=False)
        return cls(a, lam, topology)


def validate_weights(a, topology=None):
    """Raise ``InvalidWeightMatrix`` unless ``a`` meets every gossip-matrix invariant."""
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidWeightMatrix(f"weight matrix must be square, got {a.shape}")
    if np.any(a < 0):
        raise InvalidWeightMatrix("weights must be non-negative")
    if not np.allclose(a, a.T, atol=_STOCH_TOL, rtol=0):
        raise InvalidWeightMatrix("weight matrix is not symmetric")
    if np.max(np.abs(a.sum(axis=1) - 1.0)) > _STOCH_TOL or np.max(np.abs(a.sum(axis=0) - 1.0)) > _STOCH_TOL:
        raise InvalidWeightMatrix("rows and columns must sum to 1")
    if topology is not None:
        if topology.n_nodes != a.shape[0]:
            raise InvalidWeightMatrix("matrix size does not match topology")
        n = a.shape[0]
        for i in range(n):
            for j in range(n):
                if i != j and a[i, j] > 0 and (min(i, j), max(i, j)) not in topology.edges:
                    raise InvalidWeightMatrix(f"a[{i},{j}] > 0 but ({i},{j}) is not an edge")


def metropolis_weights(topology: Topology) -> WeightMatrix:
    """Metropolis-Hastings weights: ``1 / (1 + max(deg i, deg j))`` on edges."""
    if not topology.is_connected():
        raise TopologyDisconnected(f"graph on {topology.n_nodes} nodes is not connected")
    n = topology.n_nodes
    deg = np.zeros(n, dtype=int)
    for i, j in topology.edges:
        deg[i] += 1
        deg[j] += 1
    a = np.zeros((n, n))
    for i, j in topology.edges:
        a[i, j] = a[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    a[np.diag_indices(n)] = 1.0 - a.sum(axis=1)
    return WeightMatrix.from_matrix(a, topology)


def second_eigenvalue(a, method="power", tol=1e-10, max_iter=200_000, seed=0):
    """Largest eigenvalue of ``A - 11^T/n`` for a symmetric doubly stochastic ``A``.

    ``method="power"`` runs power iteration on the shifted matrix
    ``A - 11^T/n + I`` (spectrum in ``[0, 2]``, so the dominant eigenvalue is
    the signed maximum) and stops when successive Rayleigh quotients agree to
    relative tolerance ``tol``.  ``method="dense"`` uses ``numpy.linalg.eigvalsh``.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    b = a - np.full((n, n), 1.0 / n)
    if method == "dense":
        return float(np.linalg.eigvalsh(b)[-1])
    if n == 1:
        return 0.0
    shifted = b + np.eye(n)
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    rho = v @ shifted @ v
    for _ in range(max_iter):
        w = shifted @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return -1.0
        v = w / nw
        new = v @ shifted @ v
        # the Rayleigh quotient error trails the step size, so stop well inside tol
        if abs(new - rho) <= 1e-2 * tol * max(abs(new), 1e-300):
            # spectrum of ``shifted`` lies in [0, 2]; undo the unit shift
            return float(new - 1.0)
        rho = new
    raise NoConvergence(f"power iteration did not converge in {max_iter} steps")


def gossip(w: WeightMatrix, states, counter: OpCounter | None = None):
    """One network-wide communication round: ``out[i] = sum_j a_ij states[j]``."""
    try:
        s = np.asarray(states, dtype=float)
    except ValueError as exc:
        raise DimensionMismatch("states have unequal dimensions") from exc
    if s.ndim not in (1, 2):
        raise DimensionMismatch("states must be a sequence of equal-length vectors")
    if s.shape[0] != w.n:
        raise DimensionMismatch(f"expected {w.n} states, got {s.shape[0]}")
    if counter is not None:
        counter.comm += 1
    return w.a @ s
