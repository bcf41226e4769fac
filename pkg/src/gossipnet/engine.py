"""Seeded discrete-event simulators for the three communication models.

Schedules are generated independently of the optimisation state: candidate
ticks come from a global Poisson clock of rate ``I`` with the edge drawn with
probability ``p_ij / I``. In the loss network each tick is also assigned an
initiating endpoint uniformly, which is the same in law as every node running a
clock of rate ``(1/2) sum_j p_ij`` and picking ``j`` with probability
proportional to ``p_ij``. Chunks have a fixed size, so a longer horizon only
extends the event sequence and never changes its prefix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .dualcore import (
    CacdmState,
    CdmState,
    cacdm_params,
    cacdm_step,
    cacdm_synced,
    cdm_step,
    gossip_matrix,
    sync_step,
)
from .errors import InvalidParameter
from .graph import rlnm_rates, total_intensity
from .objective import dual_gap, error_metrics, optimum

STREAMS = {"topology": 0, "clock": 1, "choice": 2, "probe": 3}
CHUNK = 1 << 16
ALGORITHMS = ("CDM", "CACDM")


def make_stream(seed, name):
    """Independent generator for one purpose (``topology``, ``clock``, ``choice``, ``probe``)."""
    if name not in STREAMS:
        raise InvalidParameter(f"unknown stream {name!r}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[name],))
    return np.random.Generator(np.random.Philox(ss))


def exponential_from_uniform(u, rate):
    """Inverse CDF ``-ln(U)/rate`` for ``U`` in ``(0, 1]``."""
    return -np.log(u) / rate


def sample_exponential(rng, rate, size=None):
    if not rate > 0:
        raise InvalidParameter(f"rate must be positive, got {rate}")
    u = 1.0 - rng.random(size)
    return exponential_from_uniform(u, rate)


@dataclass
class SimConfig:
    horizon: float
    record_times: Optional[np.ndarray] = None
    seed: int = 0
    algorithm: str = "CDM"
    record_activation_log: bool = False
    record_states: bool = False
    use_kernels: bool = True
    num_records: int = 200
    cacdm_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.horizon > 0:
            raise InvalidParameter(f"horizon must be positive, got {self.horizon}")
        if self.algorithm not in ALGORITHMS:
            raise InvalidParameter(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.record_times is None:
            self.record_times = np.linspace(0.0, self.horizon, self.num_records)
        rt = np.asarray(self.record_times, dtype=float)
        if rt.ndim != 1 or rt.size == 0:
            raise InvalidParameter("record_times must be a non-empty 1-d sequence")
        if np.any(np.diff(rt) <= 0):
            raise InvalidParameter("record_times must be strictly increasing")
        if rt[0] < 0 or rt[-1] > self.horizon:
            raise InvalidParameter("record_times must lie in [0, horizon]")
        self.record_times = rt


@dataclass
class ActivationLog:
    """Every busy-check attempt (accepted or failed) in time order."""

    time: np.ndarray
    i: np.ndarray
    j: np.ndarray
    edge: np.ndarray
    accepted: np.ndarray
    dual_gap: np.ndarray

    def accepted_edges(self):
        return self.edge[self.accepted]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "time", "i", "j", "accepted", "dual_gap"])
            for k in range(self.time.shape[0]):
                w.writerow([k, _fmt(self.time[k]), int(self.i[k]), int(self.j[k]),
                            int(bool(self.accepted[k])), _fmt(self.dual_gap[k])])


@dataclass
class MetricSeries:
    times: np.ndarray
    dual_gap: np.ndarray
    primal_sq_err: np.ndarray
    consensus_sq_err: np.ndarray
    log: Optional[ActivationLog] = None
    states_u: Optional[np.ndarray] = None
    states_v: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def to_csv(self, path):
        write_series_csv(path, self.times, {
            "dual_gap": self.dual_gap,
            "primal_sq_err": self.primal_sq_err,
            "consensus_sq_err": self.consensus_sq_err,
        })


def _fmt(x):
    return "%.17g" % x


def write_series_csv(path, times, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", *columns])
        cols = list(columns.values())
        for r, t in enumerate(times):
            w.writerow([_fmt(t), *(_fmt(c[r]) for c in cols)])


# ----------------------------------------------------------------- schedules


class PoissonSchedule:
    """Superposed edge clocks: global rate ``I``, edge ``k`` with probability ``p_k / I``."""

    def __init__(self, rates, seed):
        self.rates = np.asarray(rates, dtype=float)
        if np.any(self.rates < 0):
            raise InvalidParameter("edge rates must be non-negative")
        self.intensity = total_intensity(self.rates)
        if self.intensity <= 0:
            raise InvalidParameter("total intensity must be positive")
        self.cum = np.cumsum(self.rates) / self.intensity
        self.clock = make_stream(seed, "clock")
        self.choice = make_stream(seed, "choice")
        self.t = 0.0

    def next_chunk(self):
        gaps = sample_exponential(self.clock, self.intensity, CHUNK)
        times = self.t + np.cumsum(gaps)
        self.t = float(times[-1])
        edges = np.searchsorted(self.cum, self.choice.random(CHUNK), side="right")
        edges = np.minimum(edges, self.rates.shape[0] - 1).astype(np.int64)
        flips = self.choice.random(CHUNK)
        return times, edges, flips


def _ppp_chunks(rates, seed, horizon):
    sched = PoissonSchedule(rates, seed)
    while True:
        times, edges, flips = sched.next_chunk()
        inside = times <= horizon
        if not inside.all():
            yield times[inside], edges[inside], flips[inside], True
            return
        yield times, edges, flips, False


def _rlnm_chunks(topology, delays, rates, seed, horizon, keep_log):
    """Accepted activations per chunk, plus the attempt log when requested."""
    tau = delays.edge_delays
    eps = float(delays.epsilon)
    busy = np.full(topology.n, -np.inf)
    eu, ev = topology.edge_u, topology.edge_v
    for times, edges, flips, last in _ppp_chunks(rates, seed, horizon):
        status = np.empty(times.shape[0], dtype=np.int8)
        init = np.empty(times.shape[0], dtype=np.int64)
        kernels.rlnm_filter(times, edges, flips, eu, ev, tau, eps, busy, status, init)
        acc = status == kernels.ACCEPTED
        attempt = None
        if keep_log:
            tried = status != kernels.DROPPED
            ii = init[tried]
            ee = edges[tried]
            jj = np.where(eu[ee] == ii, ev[ee], eu[ee])
            attempt = (times[tried], ii, jj, ee, acc[tried])
        yield times[acc], edges[acc], attempt, last


def rlnm_schedule(topology, delays, seed, horizon, rates=None):
    """Full attempt log of the loss network on ``[0, horizon]`` (no optimisation state)."""
    if rates is None:
        rates = rlnm_rates(topology, delays)
    parts = [a for _, _, a, _ in _rlnm_chunks(topology, delays, rates, seed, horizon, True)]
    cat = [np.concatenate([p[r] for p in parts]) for r in range(5)]
    return ActivationLog(cat[0], cat[1], cat[2], cat[3], cat[4], np.full(cat[0].shape[0], np.nan))


# ------------------------------------------------------------------ drivers


class _Driver:
    """Feeds accepted activations to one algorithm and collects metrics."""

    def __init__(self, topology, instance, config, rates):
        self.topology = topology
        self.instance = instance
        self.config = config
        self.opt = optimum(instance)
        self.R = config.record_times.shape[0]
        self.out = np.zeros((self.R, 3))
        self.rec_pos = 0
        self.gap_chunks = []
        self.info = {"algorithm": config.algorithm}
        self.fast = config.use_kernels and instance.is_quadratic
        n, d = instance.n, instance.dim
        if config.algorithm == "CACDM":
            self.params = cacdm_params(topology, rates, instance, **config.cacdm_options)
            self.info.update(theta=self.params.theta, gap=self.params.gap,
                             s_squared=self.params.s_squared, intensity=self.params.intensity,
                             rate=self.params.rate)
            self.state = CacdmState.zeros(instance, self.params)
            shape = (self.R, n, d) if config.record_states else (0, n, d)
            self.states_u = np.zeros(shape)
            self.states_v = np.zeros(shape)
        else:
            self.state = CdmState.zeros(instance)
            if self.fast:
                a, c = instance.quadratic_arrays()
                self.node_gaps = np.array([kernels.node_gap(np.zeros(d), self.opt.v[i], a[i], c[i])
                                           for i in range(n)])
                self.gap_total = np.array([self.node_gaps.sum(), 0.0])
        if self.fast:
            self.a, self.c = instance.quadratic_arrays()

    def feed(self, times, edges, flush):
        cfg = self.config
        log_gap = np.zeros(times.shape[0] if cfg.record_activation_log else 0)
        if self.fast:
            self._feed_kernel(times, edges, flush, log_gap)
        else:
            self._feed_python(times, edges, flush, log_gap)
        if cfg.record_activation_log:
            self.gap_chunks.append(log_gap)

    def _feed_kernel(self, times, edges, flush, log_gap):
        t = self.topology
        o = self.opt
        if self.config.algorithm == "CDM":
            self.rec_pos = kernels.cdm_quad_run(
                self.state.v, self.a, self.c, o.x, o.v, t.edge_u, t.edge_v, times, edges,
                self.config.record_times, self.rec_pos, self.out, self.node_gaps,
                self.gap_total, log_gap, flush)
        else:
            s = self.state
            self.rec_pos = kernels.cacdm_quad_run(
                s.u, s.v, s.last_sync, self.a, self.c, o.x, o.v, self.params.rate,
                self.params.coupling, t.edge_u, t.edge_v, times, edges,
                self.config.record_times, self.rec_pos, self.out, self.states_u,
                self.states_v, log_gap, flush)

    def _record_python(self, t_rec):
        if self.config.algorithm == "CDM":
            w = self.state.v
        else:
            synced = cacdm_synced(self.state, t_rec)
            w = synced.u
            if self.states_u.shape[0]:
                self.states_u[self.rec_pos] = synced.u
                self.states_v[self.rec_pos] = synced.v
        m = error_metrics(self.instance, w, self.opt)
        self.out[self.rec_pos] = (m.dual_gap, m.primal_sq_err, m.consensus_sq_err)
        self.rec_pos += 1

    def _feed_python(self, times, edges, flush, log_gap):
        rt = self.config.record_times
        for q in range(times.shape[0]):
            t = float(times[q])
            while self.rec_pos < self.R and rt[self.rec_pos] < t:
                self._record_python(rt[self.rec_pos])
            if self.config.algorithm == "CDM":
                cdm_step(self.state, self.instance, self.topology, int(edges[q]))
                if log_gap.shape[0]:
                    log_gap[q] = dual_gap(self.instance, self.state.v, self.opt)
            else:
                cacdm_step(self.state, self.instance, self.topology, int(edges[q]), t)
                if log_gap.shape[0]:
                    log_gap[q] = dual_gap(self.instance, cacdm_synced(self.state, t).u, self.opt)
        if flush:
            while self.rec_pos < self.R:
                self._record_python(rt[self.rec_pos])

    def series(self, log=None):
        out = MetricSeries(self.config.record_times.copy(), self.out[:, 0].copy(),
                           self.out[:, 1].copy(), self.out[:, 2].copy(), log=log, info=self.info)
        if self.config.algorithm == "CACDM" and self.config.record_states:
            out.states_u, out.states_v = self.states_u, self.states_v
        return out


def run_ppp(topology, rates, instance, config):
    """Edges fire at the points of independent Poisson processes of rates ``p_ij``."""
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (topology.num_edges,):
        raise InvalidParameter("one rate per edge is required")
    if instance.n != topology.n:
        raise InvalidParameter("instance and topology disagree on node count")
    drv = _Driver(topology, instance, config, rates)
    acc_t, acc_e = [], []
    for times, edges, _, last in _ppp_chunks(rates, config.seed, config.horizon):
        drv.feed(times, edges, last)
        if config.record_activation_log:
            acc_t.append(times)
            acc_e.append(edges)
    log = None
    if config.record_activation_log:
        times = np.concatenate(acc_t)
        edges = np.concatenate(acc_e)
        log = ActivationLog(times, topology.edge_u[edges], topology.edge_v[edges], edges,
                            np.ones(times.shape[0], dtype=bool), np.concatenate(drv.gap_chunks))
    drv.info["model"] = "ppp"
    return drv.series(log)


def run_rlnm(topology, delays, instance, config, rates=None):
    """Loss network with busy-locking; CACDM uses the same rates for its parameters."""
    if instance.n != topology.n:
        raise InvalidParameter("instance and topology disagree on node count")
    if rates is None:
        rates = rlnm_rates(topology, delays)
    drv = _Driver(topology, instance, config, rates)
    parts = []
    for times, edges, attempt, last in _rlnm_chunks(topology, delays, rates, config.seed,
                                                    config.horizon, config.record_activation_log):
        drv.feed(times, edges, last)
        if attempt is not None:
            parts.append(attempt)
    log = None
    if config.record_activation_log:
        cat = [np.concatenate([p[r] for p in parts]) for r in range(5)]
        gaps = np.full(cat[0].shape[0], np.nan)
        gaps[cat[4]] = np.concatenate(drv.gap_chunks)
        log = ActivationLog(cat[0], cat[1], cat[2], cat[3], cat[4], gaps)
    drv.info["model"] = "rlnm"
    drv.info["rates"] = np.asarray(rates).tolist()
    return drv.series(log)


def run_sync(topology, delays, instance, config):
    """Synchronous Metropolis gossip with one round every ``tau_max``.

    Gossip averages primal values, so the curvatures must be uniform for the
    average to be the optimum; the dual field is read as ``a (x - c)``.
    """
    if instance.n != topology.n:
        raise InvalidParameter("instance and topology disagree on node count")
    if not instance.is_quadratic:
        raise InvalidParameter("synchronous gossip is defined for quadratic instances")
    a, c = instance.quadratic_arrays()
    if not np.all(a == a[0]):
        raise InvalidParameter("synchronous gossip needs uniform curvatures")
    opt = optimum(instance)
    W = gossip_matrix(topology)
    period = delays.tau_max
    rt = config.record_times
    out = np.zeros((rt.shape[0], 3))
    x = c.copy()
    rounds = 0
    for r, t in enumerate(rt):
        # a round completing exactly at t is visible at t
        target = int(np.floor(t / period + 1e-12))
        while rounds < target:
            x = sync_step(x, W)
            rounds += 1
        m = error_metrics(instance, a[:, None] * (x - c), opt)
        out[r] = (m.dual_gap, m.primal_sq_err, m.consensus_sq_err)
    info = {"algorithm": "sync-gossip", "model": "sync", "period": period, "rounds": rounds}
    return MetricSeries(rt.copy(), out[:, 0].copy(), out[:, 1].copy(), out[:, 2].copy(), info=info)


__all__ = [
    "make_stream",
    "sample_exponential",
    "exponential_from_uniform",
    "SimConfig",
    "ActivationLog",
    "MetricSeries",
    "PoissonSchedule",
    "rlnm_schedule",
    "run_ppp",
    "run_rlnm",
    "run_sync",
    "write_series_csv",
]
