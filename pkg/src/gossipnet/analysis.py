"""Rate formulas, loss-network constants, activation statistics and rate fitting."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .engine import make_stream
from .errors import InvalidParameter
from .graph import (
    ALPHA,
    LOG_FAIL,
    effective_delays,
    laplacian,
    rlnm_rates,
    rlnm_theoretical_weights,
    spectral_gap,
    total_intensity,
)

BOUND_KINDS = ("thm1", "thm2", "thm3")


def rate_ppp_cdm(instance, gap):
    """Continuous-time decay rate ``sigma_min gap / (2 L_max)`` of the expected dual gap."""
    if gap < 0:
        raise InvalidParameter(f"spectral gap must be >= 0, got {gap}")
    return instance.sigma_min / (2.0 * instance.L_max) * gap


def rate_cacdm(params):
    """Decay rate ``I theta`` of the accelerated potential."""
    return params.rate


# ------------------------------------------------------------ loss network


@dataclass(frozen=True)
class RlnmConstants:
    rates: np.ndarray
    intensity: float
    effective_delays: np.ndarray
    effective_delay_max: float
    window_raw: float
    window: int
    a: float
    b: float
    alpha: float
    delta: float
    window_lengths: np.ndarray
    d_max: int
    log_fail: float = LOG_FAIL
    alternative_rates: np.ndarray = field(default=None, repr=False)

    @property
    def rate_mismatch(self):
        """Largest relative gap between the tuned rates and the ``1/((2 d - 1) tau)`` variant."""
        return float(np.max(np.abs(self.rates - self.alternative_rates) / self.rates))

    def to_dict(self):
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        out["rate_mismatch"] = self.rate_mismatch
        return out


def window_lengths(rates, delays, delta):
    """Per-edge time after which an activation has happened with probability ``>= 1 - delta``."""
    if not 0.0 < delta < 1.0:
        raise InvalidParameter(f"delta must lie in (0, 1), got {delta}")
    k = abs(math.log(delta)) / LOG_FAIL
    return k * (1.0 / np.asarray(rates) + delays.tau_max_adjacent) * (1.0 + delays.epsilon)


def rlnm_constants(topology, delays, delta=None, rates=None):
    """Window size ``T`` (activations), ``a``, ``b`` and the per-edge lengths ``l_ij``."""
    m = topology.num_edges
    if delta is None:
        delta = 1.0 / (6.0 * m)
    if rates is None:
        rates = rlnm_rates(topology, delays)
    rates = np.asarray(rates, dtype=float)
    intensity = total_intensity(rates)
    tt = effective_delays(rates, delays.epsilon)
    tt_max = float(tt.max())
    t_raw = 2.0 * math.log(6.0 * m) / LOG_FAIL * intensity * tt_max
    T = int(math.ceil(t_raw))
    log_term = math.log(6.0 * m * T) / LOG_FAIL
    a = 2.0 * math.e * intensity * log_term
    b = 2.0 * math.e * log_term
    deg = topology.degrees
    dmax = np.maximum(deg[topology.edge_u], deg[topology.edge_v])
    alternative = 1.0 / ((2.0 * dmax - 1.0) * delays.edge_delays)
    return RlnmConstants(rates, intensity, tt, tt_max, t_raw, T, a, b, ALPHA, float(delta),
                         window_lengths(rates, delays, delta), topology.d_max, LOG_FAIL, alternative)


@dataclass(frozen=True)
class RlnmRate:
    weights: np.ndarray
    gap: float
    asymptotic_rate: float


def rate_rlnm(topology, delays, instance, rates=None):
    """Weights, their spectral gap and the per-activation rate ``(sigma/L) gap / (24 e)``."""
    w = rlnm_theoretical_weights(topology, delays, rates=rates)
    gap = spectral_gap(laplacian(topology, w))
    return RlnmRate(w, gap, instance.sigma_min / instance.L_max * gap / (24.0 * math.e))


@dataclass(frozen=True)
class DelayCheck:
    holds: bool
    ratio: float
    limit: float


def check_assumption1(topology, delays, instance, rates=None):
    """Compare the spread of effective delays with the conditioning-dependent limit."""
    if rates is None:
        rates = rlnm_rates(topology, delays)
    tt = effective_delays(rates, delays.epsilon)
    ratio = float(tt.max() / tt.min())
    g1 = spectral_gap(laplacian(topology, np.ones(topology.num_edges)))
    limit = instance.L_max / instance.sigma_min * ALPHA * topology.d_max**2 * math.log(topology.num_edges) / g1
    return DelayCheck(ratio <= limit, ratio, limit)


# ------------------------------------------------------- activation windows


@dataclass
class AssumptionReport:
    windows: int
    window: int
    stride: int
    flags: np.ndarray
    max_gap: np.ndarray
    max_neighbour_count: dict

    @property
    def all_edges_fraction(self):
        return float(np.mean((self.flags & 1) == 0)) if self.windows else float("nan")

    @property
    def gap_fraction(self):
        return float(np.mean((self.flags & 2) == 0)) if self.windows else float("nan")

    @property
    def count_fraction(self):
        return float(np.mean((self.flags & 4) == 0)) if self.windows else float("nan")

    @property
    def good_fraction(self):
        return float(np.mean(self.flags == 0)) if self.windows else float("nan")

    @property
    def violations(self):
        return np.nonzero(self.flags)[0]

    def to_dict(self):
        return {
            "windows": self.windows,
            "window": self.window,
            "stride": self.stride,
            "all_edges_fraction": self.all_edges_fraction,
            "gap_fraction": self.gap_fraction,
            "count_fraction": self.count_fraction,
            "good_fraction": self.good_fraction,
            "max_gap": self.max_gap.tolist(),
            "max_neighbour_count": {f"{k[0]},{k[1]}": v for k, v in self.max_neighbour_count.items()},
        }


def _adjacency_csr(topology):
    adj = topology.adjacent_edges
    ptr = np.zeros(len(adj) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(a) for a in adj])
    idx = np.concatenate(adj).astype(np.int64)
    return ptr, idx


def inter_activation_counts(seq, edge):
    """``T_ij(s)`` for every run between consecutive activations of ``edge``."""
    pos = np.nonzero(np.asarray(seq) == edge)[0]
    return np.diff(pos) - 1


def neighbour_counts(seq, edge, other):
    """``N(kl, ij, s)`` per run ``[s_ij, t_ij)`` between consecutive activations of ``edge``."""
    seq = np.asarray(seq)
    pos = np.nonzero(seq == edge)[0]
    csum = np.concatenate([[0], np.cumsum(seq == other)])
    return csum[pos[1:]] - csum[pos[:-1]]


def activation_stats(seq, topology, lengths, window, a, b, stride=1):
    """Fraction of activation windows meeting the three regularity conditions.

    ``seq`` is the discrete sequence of accepted edge indices. Each window of
    ``window`` consecutive activations must contain every edge, must not leave
    any edge ``e`` idle for more than ``a * l_e`` activations, and must not let
    an adjacent edge ``f`` fire more than ``ceil(b * l_e / l_f)`` times between
    two activations of ``e``.
    """
    seq = np.asarray(seq, dtype=np.int64)
    if seq.size == 0:
        raise InvalidParameter("activation log is empty")
    if window < 1 or stride < 1:
        raise InvalidParameter("window and stride must be >= 1")
    lengths = np.asarray(lengths, dtype=float)
    ptr, idx = _adjacency_csr(topology)
    width = int(np.max(np.diff(ptr)))
    limits = np.zeros((topology.num_edges, width), dtype=np.int64)
    for e in range(topology.num_edges):
        nb = idx[ptr[e]:ptr[e + 1]]
        limits[e, : nb.size] = np.ceil(b * lengths[e] / lengths[nb])
    gap_limit = np.floor(a * lengths).astype(np.int64)
    flags = kernels.window_violations(seq, topology.num_edges, int(window), int(stride),
                                      gap_limit, ptr, idx, limits)
    max_gap = np.array([inter_activation_counts(seq, e).max(initial=-1) for e in range(topology.num_edges)])
    nmax = {}
    for e in range(topology.num_edges):
        for f in idx[ptr[e]:ptr[e + 1]]:
            if f != e:
                nmax[(e, int(f))] = int(neighbour_counts(seq, e, f).max(initial=0))
    return AssumptionReport(int(flags.shape[0]), int(window), int(stride), flags, max_gap, nmax)


# ------------------------------------------------------------- queue probe


@dataclass(frozen=True)
class ProbeResult:
    probability: np.ndarray
    sigma: np.ndarray
    delta: float
    lengths: np.ndarray
    trials: int
    burn_in: float

    @property
    def within_bound(self):
        return self.probability <= self.delta + 3.0 * self.sigma

    def to_dict(self):
        return {
            "delta": self.delta,
            "trials": self.trials,
            "burn_in": self.burn_in,
            "probability": self.probability.tolist(),
            "sigma": self.sigma.tolist(),
            "lengths": self.lengths.tolist(),
            "within_bound": self.within_bound.tolist(),
        }


def queue_probe(topology, delays, delta, trials, seed, edges=None, rates=None, burn_in=None):
    """Empirical probability that an edge has no accepted exchange in a window of length ``l_ij(delta)``.

    Each trial runs the loss network from empty for ``burn_in`` time units
    (default ``10 * max effective delay``) and then observes ``[burn_in, burn_in + l_ij]``.
    """
    if trials < 100:
        raise InvalidParameter(f"need at least 100 trials, got {trials}")
    if rates is None:
        rates = rlnm_rates(topology, delays)
    rates = np.asarray(rates, dtype=float)
    lengths = window_lengths(rates, delays, delta)
    if burn_in is None:
        burn_in = 10.0 * float(effective_delays(rates, delays.epsilon).max())
    edges = np.arange(topology.num_edges) if edges is None else np.atleast_1d(np.asarray(edges, dtype=np.int64))
    end = burn_in + float(lengths[edges].max())
    intensity = total_intensity(rates)
    cum = np.cumsum(rates) / intensity
    eu, ev = topology.edge_u, topology.edge_v
    tau = delays.edge_delays
    eps = float(delays.epsilon)
    rng = make_stream(seed, "probe")
    mean = intensity * end
    batch = int(math.ceil(mean + 6.0 * math.sqrt(mean) + 16))
    silent = np.zeros(edges.shape[0], dtype=np.int64)
    lo = burn_in
    hi = burn_in + lengths[edges]
    for _ in range(trials):
        times = np.cumsum(-np.log(1.0 - rng.random(batch)) / intensity)
        while times[-1] < end:
            more = times[-1] + np.cumsum(-np.log(1.0 - rng.random(batch)) / intensity)
            times = np.concatenate([times, more])
        n_ev = times.shape[0]
        picks = np.minimum(np.searchsorted(cum, rng.random(n_ev), side="right"), rates.shape[0] - 1)
        flips = rng.random(n_ev)
        busy = np.full(topology.n, -np.inf)
        status = np.empty(n_ev, dtype=np.int8)
        init = np.empty(n_ev, dtype=np.int64)
        kernels.rlnm_filter(times, picks.astype(np.int64), flips, eu, ev, tau, eps, busy, status, init)
        acc = status == kernels.ACCEPTED
        at, ae = times[acc], picks[acc]
        for q, e in enumerate(edges):
            hit = at[(ae == e)]
            if not np.any((hit >= lo) & (hit <= hi[q])):
                silent[q] += 1
    prob = silent / trials
    sigma = np.sqrt(delta * (1.0 - delta) / trials)
    return ProbeResult(prob, np.full(prob.shape, sigma), float(delta), lengths[edges], int(trials), float(burn_in))


# ------------------------------------------------------------ rates and bounds


def fit_rate(series=None, t_start=None, t_end=None, times=None, values=None):
    """Negated least-squares slope of ``log(value)`` against time on ``[t_start, t_end]``.

    Pass a :class:`~gossipnet.engine.MetricSeries` (its dual gap is used) or
    explicit ``times`` and ``values``.
    """
    if series is not None:
        times, values = series.times, series.dual_gap
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    lo = times[0] if t_start is None else t_start
    hi = times[-1] if t_end is None else t_end
    sel = (times >= lo) & (times <= hi)
    if sel.sum() < 2:
        raise InvalidParameter("fit window holds fewer than two samples")
    if np.any(values[sel] <= 0):
        raise InvalidParameter("fit window contains non-positive values")
    slope = np.polyfit(times[sel], np.log(values[sel]), 1)[0]
    return float(-slope)


def bound_curve(kind, params, times):
    """Theoretical envelope at ``times``.

    ``thm1`` and ``thm2`` take ``{"initial", "rate"}`` and return
    ``initial * exp(-rate t)``. ``thm3`` takes ``{"initial", "condition",
    "gap", "window"}`` (``condition = sigma_min / L_max``) and treats ``times``
    as activation indices ``k``.
    """
    if kind not in BOUND_KINDS:
        raise InvalidParameter(f"unknown bound kind {kind!r}")
    times = np.asarray(times, dtype=float)
    init = float(params["initial"])
    if kind in ("thm1", "thm2"):
        return init * np.exp(-float(params["rate"]) * times)
    T = int(params["window"])
    q = 1.0 - float(params["condition"]) * float(params["gap"])
    factor = 0.25 * q ** (T / 3.0) + 0.75
    return init * factor ** np.ceil(times / (2.0 * T))


__all__ = [
    "rate_ppp_cdm",
    "rate_cacdm",
    "RlnmConstants",
    "window_lengths",
    "rlnm_constants",
    "RlnmRate",
    "rate_rlnm",
    "DelayCheck",
    "check_assumption1",
    "AssumptionReport",
    "inter_activation_counts",
    "neighbour_counts",
    "activation_stats",
    "ProbeResult",
    "queue_probe",
    "fit_rate",
    "bound_curve",
]
