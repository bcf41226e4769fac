"""Multi-seed runs, threshold crossing times and the figure set-ups."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import bound_curve, rate_ppp_cdm, rate_rlnm, rlnm_constants
from .engine import SimConfig, run_ppp, run_rlnm, run_sync
from .errors import InvalidParameter
from .graph import (
    assign_straggler_delays,
    build_topology,
    laplacian,
    ppp_rates,
    rlnm_rates,
    spectral_gap,
    total_intensity,
)
from .objective import averaging_instance, optimum, dual_gap


def run_single(cfg, seed, horizon=None, record_times=None, use_kernels=True):
    """One engine run for an :class:`~gossipnet.config.ExperimentConfig` and seed."""
    horizon = cfg.horizon if horizon is None else horizon
    if record_times is None:
        record_times = cfg.record_times if horizon == cfg.horizon else None
    sim = SimConfig(horizon=horizon, record_times=record_times, seed=int(seed),
                    algorithm="CDM" if cfg.algorithm == "sync-gossip" else cfg.algorithm,
                    record_activation_log=cfg.record_activation_log,
                    use_kernels=use_kernels, cacdm_options=dict(cfg.cacdm_options))
    if cfg.model == "sync":
        return run_sync(cfg.topology, cfg.delays, cfg.instance, sim)
    if cfg.model == "ppp":
        return run_ppp(cfg.topology, cfg.edge_rates(), cfg.instance, sim)
    return run_rlnm(cfg.topology, cfg.delays, cfg.instance, sim, rates=cfg.edge_rates())


@dataclass
class AveragedSeries:
    times: np.ndarray
    dual_gap: np.ndarray
    primal_sq_err: np.ndarray
    consensus_sq_err: np.ndarray
    seeds: list = field(default_factory=list)

    def columns(self):
        return {
            "dual_gap": self.dual_gap,
            "primal_sq_err": self.primal_sq_err,
            "consensus_sq_err": self.consensus_sq_err,
        }


def average_series(runs, seeds=None):
    """Pointwise mean over runs sharing one record grid."""
    if not runs:
        raise InvalidParameter("nothing to average")
    times = runs[0].times
    for r in runs[1:]:
        if r.times.shape != times.shape or np.any(r.times != times):
            raise InvalidParameter("runs use different record grids")
    return AveragedSeries(
        times.copy(),
        np.mean([r.dual_gap for r in runs], axis=0),
        np.mean([r.primal_sq_err for r in runs], axis=0),
        np.mean([r.consensus_sq_err for r in runs], axis=0),
        list(seeds) if seeds is not None else [],
    )


def time_to_threshold(times, values, threshold):
    """First time the sampled curve reaches ``threshold``, log-interpolated between samples.

    Returns ``inf`` when the curve never gets there.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if not threshold > 0:
        raise InvalidParameter("threshold must be positive")
    hit = np.nonzero(values <= threshold)[0]
    if hit.size == 0:
        return math.inf
    k = int(hit[0])
    if k == 0:
        return float(times[0])
    v0, v1 = values[k - 1], values[k]
    t0, t1 = times[k - 1], times[k]
    if v1 <= 0:
        return float(t1)
    frac = (math.log(v0) - math.log(threshold)) / (math.log(v0) - math.log(v1))
    return float(t0 + frac * (t1 - t0))


def mean_time_to_threshold(runner, seeds, threshold, horizon, num_records=400, max_doublings=8):
    """Time for the seed-averaged dual gap to reach ``threshold``.

    ``runner(seed, horizon, record_times)`` returns a metric series. The horizon
    doubles until the averaged curve crosses; event prefixes do not depend on
    the horizon, so a longer run extends the shorter one.
    """
    for _ in range(max_doublings + 1):
        rt = np.linspace(0.0, horizon, num_records)
        avg = average_series([runner(s, horizon, rt) for s in seeds], seeds)
        t = time_to_threshold(avg.times, avg.dual_gap, threshold)
        if math.isfinite(t):
            return t, avg
        horizon *= 2.0
    return math.inf, avg


# ---------------------------------------------------------------- figures

FIGURES = {
    "fig1": (("CDM", "ppp"), ("CACDM", "ppp")),
    "fig2": (("sync-gossip", "sync"), ("CDM", "rlnm")),
    "fig3": (("CDM", "rlnm"), ("CACDM", "rlnm")),
}
GRAPHS = {"cycle50": ("cycle", (50,)), "grid15x15": ("grid2d", (15, 15))}
HORIZONS = {
    ("fig1", "cycle50"): 30000.0,
    ("fig1", "grid15x15"): 2000.0,
    ("fig2", "cycle50"): 150000.0,
    ("fig2", "grid15x15"): 80000.0,
    ("fig3", "cycle50"): 120000.0,
    ("fig3", "grid15x15"): 40000.0,
}
STRAGGLERS = {"fraction": 0.1, "slow": 100.0, "fast": 1.0, "seed": 0}
EPSILON = 0.05
DEFAULT_SEEDS = 20


@dataclass
class FigureSetup:
    graph: str
    topology: object
    delays: object
    instance: object


def figure_setup(graph, straggler_seed=STRAGGLERS["seed"], epsilon=EPSILON):
    if graph not in GRAPHS:
        raise InvalidParameter(f"unknown figure graph {graph!r}")
    kind, sizes = GRAPHS[graph]
    top = build_topology(kind, *sizes)
    delays = assign_straggler_delays(top, STRAGGLERS["fraction"], STRAGGLERS["slow"],
                                     STRAGGLERS["fast"], straggler_seed, epsilon)
    return FigureSetup(graph, top, delays, averaging_instance(top.n))


def setup_runner(setup, algorithm, model, cacdm_options=None):
    """``runner(seed, horizon, record_times)`` for one curve of a figure."""
    opts = dict(cacdm_options or {})

    def runner(seed, horizon, record_times):
        sim = SimConfig(horizon=horizon, record_times=record_times, seed=int(seed),
                        algorithm="CDM" if algorithm == "sync-gossip" else algorithm,
                        cacdm_options=opts)
        if model == "sync":
            return run_sync(setup.topology, setup.delays, setup.instance, sim)
        if model == "ppp":
            return run_ppp(setup.topology, ppp_rates(setup.delays), setup.instance, sim)
        return run_rlnm(setup.topology, setup.delays, setup.instance, sim)

    return runner


def figure_bound(setup, algorithm, model, times):
    """Theoretical envelope matching one curve, or ``None`` where none applies."""
    inst = setup.instance
    g0 = dual_gap(inst, inst.zeros(), optimum(inst))
    if model == "ppp" and algorithm == "CDM":
        gap = spectral_gap(laplacian(setup.topology, ppp_rates(setup.delays)))
        return "thm1", bound_curve("thm1", {"initial": g0, "rate": rate_ppp_cdm(inst, gap)}, times)
    if model == "rlnm" and algorithm == "CDM":
        rr = rate_rlnm(setup.topology, setup.delays, inst)
        const = rlnm_constants(setup.topology, setup.delays)
        # activation index of time t under the nominal intensity
        k = const.intensity * np.asarray(times)
        params = {"initial": g0, "condition": inst.sigma_min / inst.L_max, "gap": rr.gap,
                  "window": const.window}
        return "thm3", bound_curve("thm3", params, k)
    return None, None


@dataclass
class FigureResult:
    figure: str
    graph: str
    times: np.ndarray
    curves: dict
    bounds: dict
    info: dict


def run_figure(figure, graph, seeds, horizon=None, num_records=200):
    """Seed-averaged dual-gap curves of both algorithms of one figure on one graph."""
    if figure not in FIGURES:
        raise InvalidParameter(f"unknown figure {figure!r}")
    setup = figure_setup(graph)
    horizon = HORIZONS[(figure, graph)] if horizon is None else float(horizon)
    rt = np.linspace(0.0, horizon, num_records)
    curves, bounds, info = {}, {}, {}
    for algorithm, model in FIGURES[figure]:
        label = f"{algorithm}-{model}"
        runner = setup_runner(setup, algorithm, model)
        avg = average_series([runner(s, horizon, rt) for s in seeds], seeds)
        curves[label] = avg.dual_gap
        kind, curve = figure_bound(setup, algorithm, model, rt)
        if kind is not None:
            bounds[f"{label}-{kind}"] = curve
        info[label] = {"seeds": list(seeds)}
    info["intensity_rlnm"] = total_intensity(rlnm_rates(setup.topology, setup.delays))
    return FigureResult(figure, graph, rt, curves, bounds, info)


__all__ = [
    "run_single",
    "AveragedSeries",
    "average_series",
    "time_to_threshold",
    "mean_time_to_threshold",
    "FIGURES",
    "GRAPHS",
    "HORIZONS",
    "FigureSetup",
    "figure_setup",
    "setup_runner",
    "figure_bound",
    "FigureResult",
    "run_figure",
]
