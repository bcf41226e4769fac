"""JSON experiment configuration."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameter
from .graph import (
    DelayProfile,
    assign_straggler_delays,
    build_topology,
    homogeneous_delays,
    ppp_rates,
    rlnm_rates,
    topology_from_edges,
)
from .objective import instance_from_spec

MODELS = ("sync", "ppp", "rlnm")
ALGORITHMS = ("CDM", "CACDM", "sync-gossip")
SEED_ENV = "GOSSIPNET_SEED"


@dataclass
class ExperimentConfig:
    topology: object
    delays: DelayProfile
    instance: object
    model: str = "ppp"
    algorithm: str = "CDM"
    horizon: float = 1000.0
    records: object = 200
    seeds: list = field(default_factory=lambda: [0])
    output: str = "out"
    emit_svg: bool = False
    rates_spec: object = None
    cacdm_options: dict = field(default_factory=dict)
    record_activation_log: bool = False

    def __post_init__(self):
        if self.model not in MODELS:
            raise InvalidParameter(f"model must be one of {MODELS}, got {self.model!r}")
        if self.algorithm not in ALGORITHMS:
            raise InvalidParameter(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if (self.algorithm == "sync-gossip") != (self.model == "sync"):
            raise InvalidParameter("sync-gossip runs exactly under the sync model")
        if not self.horizon > 0:
            raise InvalidParameter("horizon must be positive")
        if not self.seeds:
            raise InvalidParameter("at least one seed is required")

    @property
    def record_times(self):
        if isinstance(self.records, (int, np.integer)):
            if self.records < 1:
                raise InvalidParameter("records must be >= 1")
            return np.linspace(0.0, self.horizon, int(self.records))
        return np.asarray(self.records, dtype=float)

    def edge_rates(self):
        spec = self.rates_spec
        if spec is None:
            spec = "rlnm" if self.model == "rlnm" else "ppp"
        if isinstance(spec, str):
            if spec == "ppp":
                return ppp_rates(self.delays)
            if spec == "rlnm":
                return rlnm_rates(self.topology, self.delays)
            raise InvalidParameter(f"unknown rate rule {spec!r}")
        rates = np.asarray(spec, dtype=float)
        if rates.shape != (self.topology.num_edges,):
            raise InvalidParameter("explicit rates need one entry per edge")
        return rates


def parse_topology(spec):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InvalidParameter("topology needs a 'kind'")
    kind = {"grid": "grid2d"}.get(spec["kind"], spec["kind"])
    if kind == "custom":
        return topology_from_edges(spec["n"], spec["edges"])
    params = spec.get("params", [])
    if isinstance(params, (int, float)):
        params = [params]
    return build_topology(kind, *params)


def parse_delays(spec, topology, epsilon):
    spec = spec or {"mode": "homogeneous"}
    mode = spec.get("mode", "explicit" if "node_delays" in spec else "homogeneous")
    if mode == "homogeneous":
        return homogeneous_delays(topology, float(spec.get("tau", 1.0)), epsilon)
    if mode == "straggler":
        return assign_straggler_delays(topology, float(spec["fraction"]), float(spec["slow"]),
                                       float(spec["fast"]), int(spec.get("seed", 0)), epsilon)
    if mode == "explicit":
        return DelayProfile(topology, np.asarray(spec["node_delays"], dtype=float), epsilon)
    raise InvalidParameter(f"unknown delay mode {mode!r}")


def resolve_seeds(spec, count_override=None):
    """Seed list from a count or list, shifted to ``GOSSIPNET_SEED`` when that is set."""
    if isinstance(spec, (int, np.integer)):
        seeds = list(range(int(spec)))
    else:
        seeds = [int(s) for s in spec]
    if count_override is not None:
        start = seeds[0] if seeds else 0
        seeds = list(range(start, start + int(count_override)))
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            base = int(env)
        except ValueError:
            raise InvalidParameter(f"{SEED_ENV} must be an integer, got {env!r}") from None
        seeds = [base + k for k in range(len(seeds))]
    return seeds


def parse_config(doc, seeds_override=None, output_override=None, svg_override=None):
    if not isinstance(doc, dict):
        raise InvalidParameter("configuration must be a JSON object")
    try:
        topology = parse_topology(doc["topology"])
        epsilon = float(doc.get("epsilon", 0.0))
        delays = parse_delays(doc.get("delays"), topology, epsilon)
        instance = instance_from_spec(doc.get("instance", {}), topology.n)
        algorithm = doc.get("algorithm", "CDM")
        model = doc.get("model", "sync" if algorithm == "sync-gossip" else "ppp")
        cfg = ExperimentConfig(
            topology=topology,
            delays=delays,
            instance=instance,
            model=model,
            algorithm=algorithm,
            horizon=float(doc.get("horizon", 1000.0)),
            records=doc.get("records", 200),
            seeds=resolve_seeds(doc.get("seeds", [doc.get("seed", 0)]), seeds_override),
            output=output_override or doc.get("output", "out"),
            emit_svg=bool(doc.get("emit_svg", False) if svg_override is None else svg_override),
            rates_spec=doc.get("rates"),
            cacdm_options=dict(doc.get("cacdm", {})),
            record_activation_log=bool(doc.get("record_activation_log", False)),
        )
    except KeyError as exc:
        raise InvalidParameter(f"missing configuration key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidParameter):
            raise
        raise InvalidParameter(f"malformed configuration: {exc}") from None
    return cfg


def load_config(path, **overrides):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InvalidParameter(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidParameter(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(doc, **overrides)


def graph_only(doc):
    """Topology and delays from a config that may omit the simulation fields."""
    topology = parse_topology(doc["topology"])
    delays = parse_delays(doc.get("delays"), topology, float(doc.get("epsilon", 0.0)))
    return topology, delays


def load_graph(path) -> tuple:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InvalidParameter(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidParameter(f"config {path} is not valid JSON: {exc}") from None
    try:
        return graph_only(doc)
    except KeyError as exc:
        raise InvalidParameter(f"missing configuration key {exc}") from None

