"""State transitions of the gossip algorithms and edge-dual analysis tools.

Node-level updates act on ``(n, d)`` dual fields. The edge-dual tracker keeps
an explicit matrix ``A`` whose column for edge ``(i, j)`` is
``mu_ij (e_i - e_j)``, so node duals are ``v = A @ lam``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ClockRegression, InvalidParameter, InvalidState
from .graph import laplacian, spectral_gap, total_intensity
from .objective import Optimum, dual_gap, dual_value, primal_point


def _edge_nodes(topology, edge):
    if isinstance(edge, (int, np.integer)):
        k = int(edge)
        if not 0 <= k < topology.num_edges:
            raise InvalidParameter(f"edge index {k} out of range")
        return topology.edges[k]
    i, j = edge
    topology.index_of(i, j)
    return int(i), int(j)


def _pair_gradient(instance, i, j, wi, wj):
    return instance.locals[i].conj_grad(wi) - instance.locals[j].conj_grad(wj)


def _inverse_curvature_sum(instance, i, j):
    return 1.0 / instance.locals[i].sigma + 1.0 / instance.locals[j].sigma


# --------------------------------------------------------------------------- CDM


@dataclass
class CdmState:
    v: np.ndarray

    @classmethod
    def zeros(cls, instance):
        return cls(instance.zeros())

    def copy(self):
        return CdmState(self.v.copy())


def cdm_step(state, instance, topology, edge):
    """One dual coordinate step on ``edge``; ``state`` is untouched if an oracle fails."""
    i, j = _edge_nodes(topology, edge)
    g = _pair_gradient(instance, i, j, state.v[i], state.v[j])
    g = g / _inverse_curvature_sum(instance, i, j)
    state.v[i] -= g
    state.v[j] += g
    return state


# ------------------------------------------------------------------------- CACDM


@dataclass(frozen=True)
class CacdmParams:
    gap: float
    s_squared: float
    theta: float
    intensity: float
    L_max: float
    rate_normalized_coupling: bool = True

    @property
    def coupling(self):
        """Momentum step on the node duals.

        ``I * theta * L_max / gap`` when the coupling is expressed in
        rate-normalised time (rates summing to one), else ``theta * L_max / gap``.
        The two agree when ``I = 1``.
        """
        k = self.theta * self.L_max / self.gap
        return self.intensity * k if self.rate_normalized_coupling else k

    @property
    def rate(self):
        return self.intensity * self.theta

    @property
    def sigma_a(self):
        return self.gap / self.L_max


def cacdm_params(topology, rates, instance, s2_margin=2.0, rate_normalized_coupling=True):
    """Spectral gap, ``S^2`` and ``theta`` for the accelerated method.

    ``S^2 = s2_margin * max_ij (1/sigma_i + 1/sigma_j) / (2 p_ij / I)`` and
    ``theta = sqrt(gap / (I S^2 L_max))``. A margin of 2 with the
    rate-normalised coupling is the setting under which the expected potential
    provably contracts at rate ``I theta``; ``s2_margin=1`` with
    ``rate_normalized_coupling=False`` gives the larger nominal step, which
    converges more slowly than ``I theta`` and diverges on long cycles.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (topology.num_edges,) or np.any(rates <= 0):
        raise InvalidParameter("CACDM needs one strictly positive rate per edge")
    if not s2_margin >= 1.0:
        raise InvalidParameter(f"s2_margin must be >= 1, got {s2_margin}")
    intensity = total_intensity(rates)
    gap = spectral_gap(laplacian(topology, rates))
    if gap <= 0:
        raise InvalidParameter("graph weighted by the rates has zero spectral gap")
    inv = 1.0 / instance.sigmas
    sup = float(np.max((inv[topology.edge_u] + inv[topology.edge_v]) / (2.0 * rates / intensity)))
    s2 = s2_margin * sup
    theta = math.sqrt(gap / (intensity * s2 * instance.L_max))
    return CacdmParams(gap, s2, theta, intensity, instance.L_max, bool(rate_normalized_coupling))


@dataclass
class CacdmState:
    u: np.ndarray
    v: np.ndarray
    last_sync: np.ndarray
    params: CacdmParams

    @classmethod
    def zeros(cls, instance, params, t0=0.0):
        return cls(instance.zeros(), instance.zeros(), np.full(instance.n, float(t0)), params)

    def copy(self):
        return CacdmState(self.u.copy(), self.v.copy(), self.last_sync.copy(), self.params)


def mixing_fraction(rate, dt):
    """``(1 - exp(-2 rate dt)) / 2``, the weight moved between the pair by the contraction."""
    return -0.5 * math.expm1(-2.0 * rate * dt)


def cacdm_contract(state, i, t):
    dt = t - state.last_sync[i]
    if dt < 0:
        raise ClockRegression(f"node {i} synced at {state.last_sync[i]}, cannot contract to {t}")
    h = mixing_fraction(state.params.rate, dt)
    ui, vi = state.u[i].copy(), state.v[i]
    state.u[i] += h * (vi - ui)
    state.v[i] += h * (ui - vi)
    state.last_sync[i] = t
    return state


def cacdm_step(state, instance, topology, edge, t):
    i, j = _edge_nodes(topology, edge)
    for k in (i, j):
        if t < state.last_sync[k]:
            raise ClockRegression(f"node {k} synced at {state.last_sync[k]}, step at {t}")
    # evaluate on contracted copies so a failing oracle leaves the state intact
    h_i = mixing_fraction(state.params.rate, t - state.last_sync[i])
    h_j = mixing_fraction(state.params.rate, t - state.last_sync[j])
    ui = state.u[i] + h_i * (state.v[i] - state.u[i])
    uj = state.u[j] + h_j * (state.v[j] - state.u[j])
    g = _pair_gradient(instance, i, j, ui, uj)
    cacdm_contract(state, i, t)
    cacdm_contract(state, j, t)
    step = g / _inverse_curvature_sum(instance, i, j)
    state.u[i] -= step
    state.u[j] += step
    kg = state.params.coupling * g
    state.v[i] -= kg
    state.v[j] += kg
    return state


def cacdm_synced(state, t):
    """Copy of ``state`` with every node contracted to ``t``."""
    out = state.copy()
    for i in range(out.u.shape[0]):
        cacdm_contract(out, i, t)
    return out


def cacdm_read(state, instance, t):
    """Primal output ``grad f^*(u)`` at time ``t``; the state itself is not modified."""
    return primal_point(instance, cacdm_synced(state, t).u)


# ------------------------------------------------------------------ sync gossip


def gossip_matrix(topology):
    """Metropolis weights ``1 / (1 + max(d_i, d_j))`` with the remainder on the diagonal."""
    n = topology.n
    deg = topology.degrees
    W = np.zeros((n, n))
    u, v = topology.edge_u, topology.edge_v
    w = 1.0 / (1.0 + np.maximum(deg[u], deg[v]))
    W[u, v] = w
    W[v, u] = w
    W[np.arange(n), np.arange(n)] = 1.0 - W.sum(axis=1)
    return W


def sync_step(x, W):
    x = np.asarray(x, dtype=float)
    if W.shape != (x.shape[0], x.shape[0]):
        raise InvalidParameter(f"gossip matrix shape {W.shape} does not match {x.shape[0]} nodes")
    return W @ x


# ------------------------------------------------------------------- edge dual

MU_CHOICES = ("ppp", "cdm", "unit")


@dataclass
class EdgeDualTracker:
    """Explicit edge-dual bookkeeping for analysis on small graphs."""

    topology: object
    mu: np.ndarray
    A: np.ndarray
    lam: np.ndarray
    omega: np.ndarray
    choice: str
    lam_star: np.ndarray | None = None
    _pinv: np.ndarray | None = field(default=None, repr=False)

    @property
    def pinv(self):
        if self._pinv is None:
            self._pinv = np.linalg.pinv(self.A)
        return self._pinv

    def node_field(self, edge_field=None):
        return self.A @ (self.lam if edge_field is None else edge_field)

    def project(self, edge_field):
        """Orthogonal projection onto the complement of ``Ker(A)``."""
        return self.pinv @ (self.A @ edge_field)

    def set_reference(self, v_star):
        """Store ``lam* = A^+ v*``, the minimum-norm edge dual mapping to ``v*``."""
        lam_star = self.pinv @ np.asarray(v_star, dtype=float)
        if not np.allclose(self.A @ lam_star, v_star, atol=1e-9):
            raise InvalidParameter("v* is not in the range of A")
        self.lam_star = lam_star
        return lam_star

    def value(self, instance, edge_field=None):
        """``F_A^*(lam) = F^*(A lam)``."""
        return dual_value(instance, self.node_field(edge_field))

    def gradient(self, instance, edge_field=None):
        x = primal_point(instance, self.node_field(edge_field))
        return self.A.T @ x

    def to_csv(self, path):
        np.savetxt(path, self.A, delimiter=",", fmt="%.17g")


def build_edge_dual(topology, instance, choice="unit", rates=None):
    if choice not in MU_CHOICES:
        raise InvalidParameter(f"unknown mu choice {choice!r}")
    m = topology.num_edges
    if choice == "unit":
        mu2 = np.ones(m)
    else:
        if rates is None:
            raise InvalidParameter(f"mu choice {choice!r} needs edge rates")
        mu2 = np.asarray(rates, dtype=float).copy()
        if choice == "cdm":
            inv = 1.0 / instance.sigmas
            mu2 /= inv[topology.edge_u] + inv[topology.edge_v]
    mu = np.sqrt(mu2)
    A = np.zeros((topology.n, m))
    cols = np.arange(m)
    A[topology.edge_u, cols] = mu
    A[topology.edge_v, cols] = -mu
    zeros = np.zeros((m, instance.dim))
    return EdgeDualTracker(topology, mu, A, zeros, zeros.copy(), choice)


def edge_partial(tracker, instance, k, edge_field=None):
    """``grad_{ij} F_A^*`` for edge index ``k``."""
    i, j = tracker.topology.edges[k]
    x = tracker.node_field(edge_field)
    return tracker.mu[k] * _pair_gradient(instance, i, j, x[i], x[j])


def edge_dual_cdm_step(tracker, instance, edge):
    k = tracker.topology.index_of(*_edge_nodes(tracker.topology, edge))
    i, j = tracker.topology.edges[k]
    grad = edge_partial(tracker, instance, k)
    tracker.lam[k] -= grad / (_inverse_curvature_sum(instance, i, j) * tracker.mu[k] ** 2)
    return tracker


def edge_dual_contract(tracker, params, dt):
    """Continuous mixing of ``(lam, omega)`` over ``dt``, applied to every edge."""
    if dt < 0:
        raise ClockRegression(f"negative contraction interval {dt}")
    h = mixing_fraction(params.rate, dt)
    lam = tracker.lam.copy()
    tracker.lam += h * (tracker.omega - lam)
    tracker.omega += h * (lam - tracker.omega)
    return tracker


def edge_dual_cacdm_step(tracker, instance, params, rates, edge):
    """Coordinate step on the contracted edge-dual pair; needs ``mu^2 = p``."""
    if tracker.choice != "ppp":
        raise InvalidState("accelerated edge-dual steps need the mu^2 = p normalisation")
    k = tracker.topology.index_of(*_edge_nodes(tracker.topology, edge))
    i, j = tracker.topology.edges[k]
    grad = edge_partial(tracker, instance, k)
    tracker.lam[k] -= grad / (_inverse_curvature_sum(instance, i, j) * tracker.mu[k] ** 2)
    # with mu^2 = p this moves A omega by exactly the node-level momentum step
    tracker.omega[k] -= params.coupling / rates[k] * grad
    return tracker


# --------------------------------------------------------------------- Lyapunov


def lyapunov_coefficient(params):
    """Weight of the dual gap in the accelerated potential, ``2 I theta^2 S^2 / sigma_A^2 = 2 L_max / gap``.

    This is ``2 / sigma_A`` in rate-normalised time, rescaled to the unnormalised
    edge-dual matrix built with ``mu^2 = p``.
    """
    return 2.0 * params.intensity * params.theta**2 * params.s_squared / params.sigma_a**2


def lyapunov_cacdm(tracker, instance, params, lam=None, omega=None):
    """``||P(omega - lam*)||^2 + c (F_A^*(lam) - F_A^*(lam*))`` for the current or given pair."""
    if tracker.lam_star is None:
        raise InvalidState("reference edge dual lam* has not been set")
    lam = tracker.lam if lam is None else lam
    omega = tracker.omega if omega is None else omega
    dist = tracker.project(omega - tracker.lam_star)
    v_star = tracker.A @ tracker.lam_star
    u = tracker.A @ lam
    gap = _field_gap(instance, u, v_star)
    return float(np.sum(dist**2)) + lyapunov_coefficient(params) * gap


def lyapunov_from_nodes(pinv, instance, params, u, v, v_star):
    """Same potential evaluated from node fields, using ``P omega = A^+ A omega``."""
    dist = pinv @ (np.asarray(v) - v_star)
    return float(np.sum(dist**2)) + lyapunov_coefficient(params) * _field_gap(instance, u, v_star)


def _field_gap(instance, v, v_star):
    return dual_gap(instance, v, Optimum(None, v_star, 0.0))


def lyapunov_rlnm(gaps, k, T):
    """Window average ``(1/T) sum_{l=k}^{k+T-1} E_l`` of a per-activation gap log."""
    gaps = np.asarray(gaps, dtype=float)
    if T < 1 or k < 0 or k + T > gaps.shape[0]:
        raise IndexError(f"window [{k}, {k + T}) outside a log of length {gaps.shape[0]}")
    return float(gaps[k : k + T].mean())


__all__ = [
    "CdmState",
    "cdm_step",
    "CacdmParams",
    "cacdm_params",
    "CacdmState",
    "mixing_fraction",
    "cacdm_contract",
    "cacdm_step",
    "cacdm_synced",
    "cacdm_read",
    "gossip_matrix",
    "sync_step",
    "EdgeDualTracker",
    "build_edge_dual",
    "edge_partial",
    "edge_dual_cdm_step",
    "edge_dual_contract",
    "edge_dual_cacdm_step",
    "lyapunov_coefficient",
    "lyapunov_cacdm",
    "lyapunov_from_nodes",
    "lyapunov_rlnm",
]
