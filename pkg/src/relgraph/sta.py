"""Simplified static timing plus Monte-Carlo process-variation and aging models.

Delays use a linear fan-out-loaded model, ``(d0 + k_load * fanout) * multiplier``; all
library numbers are synthetic. Random draws come from per-(seed, stream, instance) Philox
generators, indexed by gate position, so results do not depend on evaluation order or on
how instances are distributed over threads.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import NonpositiveBaseline, SchemaError
from .graph import GATE, PI, PO, CircuitGraph, TimingPath
from .netlist import GateInstance, Netlist

VARIATION_STREAM = 1
AGING_STREAM = 2
TRUNCATE_SIGMAS = 3.0

LIBRARY_FIELDS = ("d0_ps", "k_load_ps", "sigma_rel", "aging_rel", "clk_to_q_ps")


@dataclass(frozen=True)
class CellDelay:
    d0: float
    k_load: float
    sigma_rel: float
    aging_rel: float
    clk_to_q: float = 0.0

    def __post_init__(self):
        if not self.d0 > 0:
            raise ValueError("d0 must be positive")
        if self.k_load < 0 or self.aging_rel < 0 or self.clk_to_q < 0:
            raise ValueError("k_load, aging_rel and clk_to_q must be non-negative")
        if self.sigma_rel != 0 and not 0.02 <= self.sigma_rel <= 0.20:
            raise ValueError("sigma_rel must lie in [0.02, 0.20] (or be 0 for a variation-free library)")


@dataclass(frozen=True)
class DelayLibrary:
    cells: Mapping[str, CellDelay]

    def __getitem__(self, kind: str) -> CellDelay:
        try:
            return self.cells[kind]
        except KeyError:
            raise KeyError(f"library has no entry for cell kind {kind!r}") from None

    def replace(self, **overrides) -> "DelayLibrary":
        """Copy with one field overridden for every kind, e.g. ``lib.replace(sigma_rel=0)``."""
        return DelayLibrary({k: CellDelay(**{**vars(c), **overrides}) for k, c in self.cells.items()})

    def to_json(self) -> str:
        cells = {
            k: dict(zip(LIBRARY_FIELDS, (c.d0, c.k_load, c.sigma_rel, c.aging_rel, c.clk_to_q)))
            for k, c in self.cells.items()
        }
        return json.dumps({"version": 1, "cells": cells}, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DelayLibrary":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError("$", f"not valid JSON ({exc.msg})") from None
        if not isinstance(doc, dict):
            raise SchemaError("$", "expected object")
        cells = doc.get("cells", doc)
        out = {}
        for kind, entry in cells.items():
            if not isinstance(entry, dict):
                raise SchemaError(f"$.cells.{kind}", "expected object")
            missing = [f for f in LIBRARY_FIELDS if f not in entry and f != "clk_to_q_ps"]
            if missing:
                raise SchemaError(f"$.cells.{kind}.{missing[0]}", "missing")
            try:
                out[kind] = CellDelay(*(float(entry.get(f, 0.0)) for f in LIBRARY_FIELDS))
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"$.cells.{kind}", str(exc)) from None
        return cls(out)


def default_library() -> DelayLibrary:
    text = resources.files("relgraph").joinpath("data/default_library_v1.json").read_text("utf-8")
    return DelayLibrary.from_json(text)


def load_library(path) -> DelayLibrary:
    with open(path, encoding="utf-8") as fh:
        return DelayLibrary.from_json(fh.read())


@dataclass(frozen=True, eq=False)
class VariationInstance:
    """Per-gate delay multipliers, indexed like ``netlist.gates``."""

    multipliers: np.ndarray
    seed: int

    def as_dict(self, netlist: Netlist) -> dict[str, float]:
        return {g.instance_name: float(m) for g, m in zip(netlist.gates, self.multipliers)}


@dataclass(frozen=True)
class DegradationLabel:
    mu: float
    sigma: float
    max: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.mu, self.sigma, self.max)


@dataclass(frozen=True)
class AgingParams:
    stress_mode: str = "worst_case"  # or "random"
    global_scale: float = 1.0

    def __post_init__(self):
        if self.stress_mode not in ("worst_case", "random"):
            raise ValueError("stress_mode must be 'worst_case' or 'random'")
        if self.global_scale < 0:
            raise ValueError("global_scale must be >= 0")


# --------------------------------------------------------------------------- delays and arrivals


def gate_delay(gate: GateInstance, fanout: int, lib: DelayLibrary, multiplier: float = 1.0) -> float:
    c = lib[gate.kind.name]
    return (c.d0 + c.k_load * fanout) * multiplier


def nominal_node_delays(graph: CircuitGraph, lib: DelayLibrary) -> np.ndarray:
    """Per-node delay at multiplier 1: clk-to-q for sequential nodes, loaded gate delay
    for combinational ones, zero for ports."""
    out = np.zeros(graph.n)
    loads = graph.load_count
    seq = graph.is_sequential
    for v, (role, kind) in enumerate(zip(graph.roles, graph.kinds)):
        if role != GATE:
            continue
        c = lib[kind]
        out[v] = c.clk_to_q if seq[v] else c.d0 + c.k_load * loads[v]
    return out


def _gate_offset(graph: CircuitGraph) -> int:
    return sum(1 for r in graph.roles if r in (PI, PO))


def node_multipliers(graph: CircuitGraph, gate_multipliers: np.ndarray) -> np.ndarray:
    """Expand (..., n_gates) gate multipliers to (..., n) node multipliers (ports get 1)."""
    gm = np.asarray(gate_multipliers, dtype=float)
    out = np.ones(gm.shape[:-1] + (graph.n,))
    out[..., _gate_offset(graph):] = gm
    return out


def arrival_matrix(graph: CircuitGraph, lib: DelayLibrary, gate_multipliers: np.ndarray) -> np.ndarray:
    """Longest-path arrivals for a batch of instances: (I, n_gates) multipliers -> (I, n)."""
    D = nominal_node_delays(graph, lib) * node_multipliers(graph, gate_multipliers)
    A = np.zeros_like(D)
    seq = graph.is_sequential
    fanin = graph.fanin
    for v in graph.topo_order.tolist():
        if seq[v] or not fanin[v]:
            A[:, v] = D[:, v]
        elif len(fanin[v]) == 1:
            A[:, v] = A[:, fanin[v][0]] + D[:, v]
        else:
            A[:, v] = A[:, list(fanin[v])].max(axis=1) + D[:, v]
    return A


def compute_arrivals(
    graph: CircuitGraph, lib: DelayLibrary, instance: VariationInstance | None = None
) -> np.ndarray:
    """Per-node arrival (ps). Sequential nodes report their launch time (clk-to-q); PO nodes
    the arrival of their driver."""
    m = np.ones(len(graph.netlist.gates)) if instance is None else instance.multipliers
    return arrival_matrix(graph, lib, m[None, :])[0]


def compute_slacks(
    graph: CircuitGraph, lib: DelayLibrary, clock_period: float, instance: VariationInstance | None = None
) -> dict[int, float]:
    """Endpoint -> slack in ps; ``clock_period`` is in ps."""
    A = compute_arrivals(graph, lib, instance)
    fanin = graph.fanin
    return {e: clock_period - float(A[list(fanin[e])].max()) for e in graph.endpoints if fanin[e]}


def path_delay(
    graph: CircuitGraph, path: TimingPath, lib: DelayLibrary, instance: VariationInstance | None = None
) -> float:
    m = np.ones(len(graph.netlist.gates)) if instance is None else instance.multipliers
    return float(path_delay_matrix(graph, [path], lib, m[None, :])[0, 0])


def path_delay_matrix(
    graph: CircuitGraph, paths: Sequence[TimingPath], lib: DelayLibrary, gate_multipliers: np.ndarray
) -> np.ndarray:
    """(I, P) delays of fixed paths: launch clk-to-q (sequential start) plus each gate's delay."""
    D = nominal_node_delays(graph, lib) * node_multipliers(graph, gate_multipliers)
    seq = graph.is_sequential
    out = np.empty((D.shape[0], len(paths)))
    for j, p in enumerate(paths):
        idx = list(p.gates)
        if seq[p.start_point]:
            idx = [p.start_point, *idx]
        out[:, j] = D[:, idx].sum(axis=1)
    return out


def endpoint_arrival_matrix(graph: CircuitGraph, paths: Sequence[TimingPath], A: np.ndarray) -> np.ndarray:
    """(I, P) data arrival at each path's endpoint under each instance."""
    fanin = graph.fanin
    return np.stack([A[:, list(fanin[p.end_point])].max(axis=1) for p in paths], axis=1)


# --------------------------------------------------------------------------- sampling


def _stream(seed: int, stream: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(stream, index))
    return np.random.Generator(np.random.Philox(ss))


def _kind_param(netlist: Netlist, lib: DelayLibrary, field: str) -> np.ndarray:
    return np.array([getattr(lib[g.kind.name], field) for g in netlist.gates], dtype=float)


def variation_multipliers(netlist: Netlist, lib: DelayLibrary, seed: int, index: int = 0) -> np.ndarray:
    """Gate multipliers ~ Normal(1, sigma_rel) truncated to +-3 sigma, by inverse CDF."""
    u = _stream(seed, VARIATION_STREAM, index).random(len(netlist.gates))
    lo = ndtr(-TRUNCATE_SIGMAS)
    z = ndtri(lo + u * (ndtr(TRUNCATE_SIGMAS) - lo))
    return 1.0 + _kind_param(netlist, lib, "sigma_rel") * z


def sample_variation_instance(netlist: Netlist, lib: DelayLibrary, seed: int, index: int = 0) -> VariationInstance:
    return VariationInstance(variation_multipliers(netlist, lib, seed, index), seed)


def apply_aging(netlist: Netlist, lib: DelayLibrary, params: AgingParams, seed: int) -> VariationInstance:
    if params.stress_mode == "worst_case":
        stress = np.ones(len(netlist.gates))
    else:
        stress = _stream(seed, AGING_STREAM, 0).random(len(netlist.gates))
    m = 1.0 + _kind_param(netlist, lib, "aging_rel") * stress * params.global_scale
    return VariationInstance(m, seed)


# --------------------------------------------------------------------------- labels


def degradation_percent(baseline: float, degraded):
    if not np.all(np.asarray(baseline) > 0):
        raise NonpositiveBaseline(f"baseline delay must be positive, got {baseline}")
    return 100.0 * (degraded - baseline) / baseline


def summarize(degradations: np.ndarray) -> DegradationLabel:
    x = np.asarray(degradations, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two instances")
    mu = x.mean()
    sigma = np.sqrt(((x - mu) ** 2).sum() / (x.size - 1))
    return DegradationLabel(float(mu), float(sigma), float(x.max()))


TIMING_MODES = ("endpoint", "path")


def _timings(graph, paths, lib, M, timing):
    if timing == "path":
        return path_delay_matrix(graph, paths, lib, M)
    if timing == "endpoint":
        return endpoint_arrival_matrix(graph, paths, arrival_matrix(graph, lib, M))
    raise ValueError(f"timing must be one of {TIMING_MODES}")


def _baseline(graph, paths, lib, timing):
    # timed exactly like the degraded instances so that unit multipliers give exactly 0 %
    return _timings(graph, paths, lib, np.ones((1, len(graph.netlist.gates))), timing)[0]


def variation_degradations(
    graph: CircuitGraph,
    paths: Sequence[TimingPath],
    lib: DelayLibrary,
    n_instances: int,
    seed: int,
    timing: str = "endpoint",
    threads: int = 1,
    chunk: int = 25,
) -> np.ndarray:
    """(n_instances, P) degradation percentages relative to each path's baseline delay.

    timing="endpoint" re-times each path's endpoint under the instance (the path keeps its
    identity but a competing path may become the worst one into that endpoint);
    timing="path" sums delays along the fixed baseline path.
    """
    netlist = graph.netlist
    base = _baseline(graph, paths, lib, timing)

    def run(lo: int) -> np.ndarray:
        hi = min(lo + chunk, n_instances)
        M = np.stack([variation_multipliers(netlist, lib, seed, i) for i in range(lo, hi)])
        return degradation_percent(base, _timings(graph, paths, lib, M, timing))

    starts = list(range(0, n_instances, chunk))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return np.concatenate(parts, axis=0)


def label_paths_variation(graph, paths, lib, n_instances=100, seed=0, timing="endpoint", threads=1):
    if n_instances < 2:
        raise ValueError("n_instances must be >= 2")
    deg = variation_degradations(graph, paths, lib, n_instances, seed, timing, threads)
    return [summarize(deg[:, j]) for j in range(len(paths))]


def label_process_variation(
    graph: CircuitGraph,
    path: TimingPath,
    lib: DelayLibrary,
    n_instances: int = 100,
    seed: int = 0,
    timing: str = "endpoint",
) -> DegradationLabel:
    return label_paths_variation(graph, [path], lib, n_instances, seed, timing)[0]


def label_paths_aging(graph, paths, lib, params: AgingParams | None = None, seed=0, timing="endpoint"):
    params = params or AgingParams()
    netlist = graph.netlist
    base = _baseline(graph, paths, lib, timing)
    M = apply_aging(netlist, lib, params, seed).multipliers[None, :]
    return degradation_percent(base, _timings(graph, paths, lib, M, timing)[0])


def label_aging(
    graph: CircuitGraph,
    path: TimingPath,
    lib: DelayLibrary,
    params: AgingParams | None = None,
    seed: int = 0,
    timing: str = "endpoint",
) -> float:
    return float(label_paths_aging(graph, [path], lib, params, seed, timing)[0])


def critical_endpoint(graph: CircuitGraph, arrivals: np.ndarray) -> int:
    """Endpoint with the latest data arrival (smallest node id on ties)."""
    fanin = graph.fanin
    best, best_a = -1, -np.inf
    for e in graph.endpoints:
        if fanin[e]:
            a = arrivals[list(fanin[e])].max()
            if a > best_a:
                best, best_a = e, a
    return best
