"""Topologies, delay profiles, weighted Laplacians and spectral gaps.

Edges are stored once, oriented ``i < j``. All per-edge quantities (delays,
rates, weights) are arrays aligned with ``Topology.edges``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidParameter

# |log(1 - (1 - 1/e)/e)|: per-attempt failure probability bound for an edge
LOG_FAIL = abs(math.log(1.0 - (1.0 - math.exp(-1.0)) * math.exp(-1.0)))
ALPHA = 32.0 * math.e**2 / LOG_FAIL**2

KINDS = ("path", "cycle", "grid2d", "complete")


@dataclass(frozen=True, eq=False)
class Topology:
    """Connected simple undirected graph on nodes ``0..n-1``."""

    n: int
    edges: tuple[tuple[int, int], ...]
    kind: str = "custom"

    def __post_init__(self):
        if self.n < 2:
            raise InvalidParameter(f"need at least 2 nodes, got {self.n}")
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise InvalidParameter(f"self-loop at node {i}")
            if not (0 <= i < j < self.n):
                raise InvalidParameter(f"edge ({i}, {j}) must satisfy 0 <= i < j < n")
            if (i, j) in seen:
                raise InvalidParameter(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
        if not self._connected():
            raise InvalidParameter("graph is not connected")

    def _connected(self):
        adj = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            for k in adj[stack.pop()]:
                if k not in seen:
                    seen.add(k)
                    stack.append(k)
        return len(seen) == self.n

    @property
    def num_edges(self):
        return len(self.edges)

    @cached_property
    def edge_u(self):
        return np.array([e[0] for e in self.edges], dtype=np.int64)

    @cached_property
    def edge_v(self):
        return np.array([e[1] for e in self.edges], dtype=np.int64)

    @cached_property
    def adjacency(self):
        adj = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def degrees(self):
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    @property
    def d_max(self):
        return int(self.degrees.max())

    @cached_property
    def edge_index(self):
        return {e: k for k, e in enumerate(self.edges)}

    @cached_property
    def incident_edges(self):
        """Per node, indices of the edges touching it."""
        inc = [[] for _ in range(self.n)]
        for k, (i, j) in enumerate(self.edges):
            inc[i].append(k)
            inc[j].append(k)
        return tuple(np.array(x, dtype=np.int64) for x in inc)

    @cached_property
    def adjacent_edges(self):
        """Per edge, indices of edges sharing a node with it (itself included)."""
        out = []
        for i, j in self.edges:
            out.append(np.union1d(self.incident_edges[i], self.incident_edges[j]))
        return tuple(out)

    def index_of(self, i, j):
        key = (i, j) if i < j else (j, i)
        try:
            return self.edge_index[key]
        except KeyError:
            raise InvalidParameter(f"({i}, {j}) is not an edge") from None


def build_topology(kind, *sizes):
    """Build one of the standard families.

    ``path(n)``, ``cycle(n)``, ``complete(n)`` take one size; ``grid2d`` takes
    ``rows, cols`` and produces the 4-neighbour lattice.
    """
    if kind not in KINDS:
        raise InvalidParameter(f"unknown topology kind {kind!r}")
    if kind == "grid2d":
        if len(sizes) != 2:
            raise InvalidParameter("grid2d needs (rows, cols)")
        rows, cols = (int(s) for s in sizes)
        if rows < 1 or cols < 1 or rows * cols < 2:
            raise InvalidParameter(f"grid2d({rows}, {cols}) has fewer than 2 nodes")
        edges = []
        for r in range(rows):
            for c in range(cols):
                k = r * cols + c
                if c + 1 < cols:
                    edges.append((k, k + 1))
                if r + 1 < rows:
                    edges.append((k, k + cols))
        return Topology(rows * cols, tuple(sorted(edges)), kind)

    if len(sizes) != 1:
        raise InvalidParameter(f"{kind} needs a single size")
    n = int(sizes[0])
    minimum = 3 if kind == "cycle" else 2
    if n < minimum:
        raise InvalidParameter(f"{kind}({n}) needs n >= {minimum}")
    if kind == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "cycle":
        edges = [(i, i + 1) for i in range(n - 1)] + [(0, n - 1)]
    else:
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return Topology(n, tuple(sorted(edges)), kind)


def topology_from_edges(n, edges):
    """Passthrough for user edge lists; pairs are re-oriented to ``i < j``."""
    norm = sorted((min(i, j), max(i, j)) for i, j in edges)
    return Topology(int(n), tuple((int(i), int(j)) for i, j in norm), "custom")


@dataclass(frozen=True, eq=False)
class DelayProfile:
    """Node delays, derived edge delays ``max(tau_i, tau_j)`` and the busy-check fraction."""

    topology: Topology
    node_delays: np.ndarray
    epsilon: float = 0.0

    def __post_init__(self):
        tau = np.asarray(self.node_delays, dtype=float)
        if tau.shape != (self.topology.n,):
            raise InvalidParameter(f"expected {self.topology.n} node delays, got shape {tau.shape}")
        if not np.all(tau > 0) or not np.all(np.isfinite(tau)):
            raise InvalidParameter("node delays must be finite and strictly positive")
        if self.epsilon < 0:
            raise InvalidParameter(f"epsilon must be >= 0, got {self.epsilon}")
        tau.setflags(write=False)
        object.__setattr__(self, "node_delays", tau)

    @cached_property
    def edge_delays(self):
        t = self.topology
        out = np.maximum(self.node_delays[t.edge_u], self.node_delays[t.edge_v])
        out.setflags(write=False)
        return out

    @property
    def tau_max(self):
        return float(self.edge_delays.max())

    @cached_property
    def tau_max_adjacent(self):
        """Per edge, the largest delay among adjacent edges (itself included)."""
        tau = self.edge_delays
        out = np.array([tau[adj].max() for adj in self.topology.adjacent_edges])
        out.setflags(write=False)
        return out


def homogeneous_delays(topology, tau=1.0, epsilon=0.0):
    return DelayProfile(topology, np.full(topology.n, float(tau)), epsilon)


def assign_straggler_delays(topology, fraction, slow, fast, rng, epsilon=0.0):
    """Give ``floor(fraction * n)`` uniformly chosen nodes delay ``slow``, the rest ``fast``.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed; an integer is
    expanded to the package's dedicated topology stream.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InvalidParameter(f"fraction must lie in [0, 1], got {fraction}")
    if slow <= 0 or fast <= 0:
        raise InvalidParameter("straggler delays must be strictly positive")
    if not isinstance(rng, np.random.Generator):
        from .engine import make_stream

        rng = make_stream(rng, "topology")
    n = topology.n
    k = int(math.floor(fraction * n + 1e-9))
    tau = np.full(n, float(fast))
    if k:
        tau[rng.choice(n, size=k, replace=False)] = float(slow)
    return DelayProfile(topology, tau, epsilon)


def _edge_array(topology, weights, name="weights"):
    w = np.asarray(weights, dtype=float)
    if w.shape != (topology.num_edges,):
        raise InvalidParameter(
            f"{name} must have one entry per edge ({topology.num_edges}), got shape {w.shape}"
        )
    return w


def laplacian(topology, weights):
    """Dense Laplacian weighted by per-edge ``weights``."""
    w = _edge_array(topology, weights)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidParameter("edge weights must be finite and non-negative")
    n = topology.n
    L = np.zeros((n, n))
    u, v = topology.edge_u, topology.edge_v
    np.add.at(L, (u, u), w)
    np.add.at(L, (v, v), w)
    L[u, v] = -w
    L[v, u] = -w
    return L


def _complement_basis(n):
    # orthonormal basis of the orthogonal complement of the constant vector
    m = np.eye(n)
    m[:, 0] = 1.0
    q, _ = np.linalg.qr(m)
    return q[:, 1:]


def laplacian_spectrum(L):
    """Eigenvalues of ``L`` restricted to the complement of the constant vector."""
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise InvalidParameter("Laplacian must be a square matrix")
    if not np.array_equal(L, L.T):
        raise InvalidParameter("Laplacian must be symmetric")
    q = _complement_basis(L.shape[0])
    return np.linalg.eigvalsh(q.T @ L @ q)


def spectral_gap(L):
    """Second smallest eigenvalue of a Laplacian (the constant eigenpair is deflated)."""
    return float(max(laplacian_spectrum(L)[0], 0.0))


def ppp_rates(delays):
    """Poisson edge intensities equal to inverse edge delays."""
    return 1.0 / delays.edge_delays


def rlnm_rates(topology, delays):
    """Edge intensities tuned for the busy-locking network.

    ``min(1/tau_max(ij), 1/(2(max(d_i, d_j) - 1) tau_ij))``; when both
    endpoints have degree 1 the second term is dropped.
    """
    deg = topology.degrees
    dmax = np.maximum(deg[topology.edge_u], deg[topology.edge_v]).astype(float)
    first = 1.0 / delays.tau_max_adjacent
    with np.errstate(divide="ignore"):
        second = np.where(dmax > 1, 1.0 / (2.0 * (dmax - 1.0) * delays.edge_delays), np.inf)
    return np.minimum(first, second)


def total_intensity(rates):
    rates = np.asarray(rates, dtype=float)
    if np.any(rates < 0):
        raise InvalidParameter("rates must be non-negative")
    return float(rates.sum())


def effective_delays(rates, epsilon):
    """``(1 + eps) / p_ij``: mean spacing between attempts inflated by the busy-check."""
    return (1.0 + epsilon) / np.asarray(rates, dtype=float)


def rlnm_theoretical_weights(topology, delays, intensity=None, rates=None):
    """Edge weights whose Laplacian gap drives the discrete-time loss-network rate."""
    if rates is None:
        rates = rlnm_rates(topology, delays)
    if intensity is None:
        intensity = total_intensity(rates)
    if intensity <= 0:
        raise InvalidParameter(f"total intensity must be positive, got {intensity}")
    tt = effective_delays(rates, delays.epsilon)
    ratio = np.array([np.min(tt[k] / tt[adj]) for k, adj in enumerate(topology.adjacent_edges)])
    logs = math.log(topology.num_edges) + math.log(intensity * tt.max())
    denom = intensity * topology.d_max**2 * logs**2
    if denom <= 0:
        raise InvalidParameter("degenerate normalisation in theoretical weights")
    return ALPHA * ratio / tt / denom


def write_matrix_csv(path, matrix):
    np.savetxt(path, np.asarray(matrix), delimiter=",", fmt="%.17g")
