"""Command-line entry point: ``simulate``, ``reproduce``, ``gap`` and ``probe-queue``."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .analysis import queue_probe
from .config import load_config, load_graph, resolve_seeds
from .engine import write_series_csv
from .errors import InvalidParameter, InvalidState, NumericFailure
from .experiments import DEFAULT_SEEDS, FIGURES, GRAPHS, average_series, run_figure, run_single
from .graph import (
    laplacian,
    ppp_rates,
    rlnm_rates,
    rlnm_theoretical_weights,
    spectral_gap,
    total_intensity,
)
from .svg import emit_svg

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def cmd_simulate(args):
    cfg = load_config(args.config, seeds_override=args.seeds, output_override=args.out,
                      svg_override=True if args.svg else None)
    os.makedirs(cfg.output, exist_ok=True)
    runs = []
    for seed in cfg.seeds:
        series = run_single(cfg, seed)
        path = os.path.join(cfg.output, f"run_seed{seed}.csv")
        series.to_csv(path)
        if series.log is not None:
            series.log.to_csv(os.path.join(cfg.output, f"activations_seed{seed}.csv"))
        _log(f"seed {seed}: final dual gap {series.dual_gap[-1]:.3e} -> {path}")
        runs.append(series)
    avg = average_series(runs, cfg.seeds)
    avg_path = os.path.join(cfg.output, "average.csv")
    write_series_csv(avg_path, avg.times, {"dual_gap": avg.dual_gap, "primal_sq_err": avg.primal_sq_err})
    if cfg.emit_svg:
        label = f"{cfg.algorithm}-{cfg.model}"
        emit_svg({label: (avg.times, avg.dual_gap)}, {}, os.path.join(cfg.output, "average.svg"),
                 title=f"{label}, {len(cfg.seeds)} seeds")
    return EXIT_OK


def cmd_reproduce(args):
    seeds = resolve_seeds(list(range(args.seeds)))
    out = args.out or os.path.join("out", args.figure)
    os.makedirs(out, exist_ok=True)
    graphs = [args.graph] if args.graph else list(GRAPHS)
    for graph in graphs:
        res = run_figure(args.figure, graph, seeds, horizon=args.horizon, num_records=args.records)
        cols = {f"{lab}_dual_gap": v for lab, v in res.curves.items()}
        cols.update({f"{lab}_bound": v for lab, v in res.bounds.items()})
        path = os.path.join(out, f"{args.figure}_{graph}.csv")
        write_series_csv(path, res.times, cols)
        _log(f"{args.figure} {graph}: wrote {path}")
        if args.svg:
            emit_svg({lab: (res.times, v) for lab, v in res.curves.items()},
                     {lab: (res.times, v) for lab, v in res.bounds.items()},
                     os.path.join(out, f"{args.figure}_{graph}.svg"),
                     title=f"{args.figure} {graph}, {len(seeds)} seeds")
    return EXIT_OK


def gap_report(topology, delays):
    """Spectral gaps of the Laplacian under each standard weighting, raw and per unit intensity."""
    weights = {
        "unit": np.ones(topology.num_edges),
        "ppp": ppp_rates(delays),
        "rlnm": rlnm_rates(topology, delays),
    }
    try:
        weights["theory"] = rlnm_theoretical_weights(topology, delays)
    except InvalidParameter as exc:
        weights["theory"] = None
        theory_error = str(exc)
    else:
        theory_error = None
    report = {"n": topology.n, "edges": topology.num_edges, "gaps": {}, "normalized_gaps": {}}
    for name, w in weights.items():
        if w is None:
            report["gaps"][name] = None
            report["normalized_gaps"][name] = None
            continue
        g = spectral_gap(laplacian(topology, w))
        report["gaps"][name] = g
        report["normalized_gaps"][name] = g / total_intensity(w)
    if theory_error:
        report["theory_error"] = theory_error
    return report


def cmd_gap(args):
    topology, delays = load_graph(args.config)
    print(json.dumps(gap_report(topology, delays), indent=2))
    return EXIT_OK


def cmd_probe_queue(args):
    topology, delays = load_graph(args.config)
    seed = resolve_seeds([args.seed])[0]
    rates = rlnm_rates(topology, delays)
    res = queue_probe(topology, delays, args.delta, args.trials, seed)
    classes = {}
    for e in range(topology.num_edges):
        key = f"tau={delays.edge_delays[e]:.6g},p={rates[e]:.6g}"
        classes.setdefault(key, []).append(e)
    report = res.to_dict()
    report["seed"] = seed
    report["classes"] = {
        key: {
            "edges": idx,
            "max_probability": float(res.probability[idx].max()),
            "within_bound": bool(res.within_bound[idx].all()),
        }
        for key, idx in classes.items()
    }
    report["all_within_bound"] = bool(res.within_bound.all())
    print(json.dumps(report, indent=2))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="gossipnet", description="Gossip and dual coordinate descent simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one configuration over several seeds")
    s.add_argument("-c", "--config", required=True)
    s.add_argument("--seeds", type=int, default=None, help="number of seeds (overrides config)")
    s.add_argument("--out", default=None, help="output directory")
    s.add_argument("--svg", action="store_true", help="also write an SVG of the averaged curve")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("reproduce", help="seed-averaged curves of a figure set-up")
    r.add_argument("figure", choices=sorted(FIGURES))
    r.add_argument("--seeds", type=int, default=DEFAULT_SEEDS)
    r.add_argument("--out", default=None)
    r.add_argument("--graph", choices=sorted(GRAPHS), default=None, help="restrict to one graph")
    r.add_argument("--horizon", type=float, default=None)
    r.add_argument("--records", type=int, default=200)
    r.add_argument("--svg", action="store_true")
    r.set_defaults(func=cmd_reproduce)

    g = sub.add_parser("gap", help="print spectral gaps as JSON")
    g.add_argument("-c", "--config", required=True)
    g.set_defaults(func=cmd_gap)

    q = sub.add_parser("probe-queue", help="empirical no-activation probabilities as JSON")
    q.add_argument("-c", "--config", required=True)
    q.add_argument("--delta", type=float, required=True)
    q.add_argument("--trials", type=int, required=True)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_probe_queue)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "seeds", None) is not None and args.seeds < 1:
            raise InvalidParameter("--seeds must be >= 1")
        return args.func(args)
    except NumericFailure as exc:
        _log(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    except (InvalidParameter, InvalidState) as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
