"""Directed circuit graphs, one-hot node features, worst-path extraction and h-hop enclosing subgraphs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import NoEndpoints, SchemaError
from .netlist import CellCatalog, Netlist, default_catalog

PI, PO, GATE = "PI", "PO", "gate"


@dataclass(frozen=True, eq=False)
class CircuitGraph:
    """Nodes are numbered PIs first, then POs, then gates in declaration order.

    Edge (u, v) means u's output net feeds v (an input pin of gate v, or PO port v).
    """

    netlist: Netlist
    roles: tuple[str, ...]
    labels: tuple[str, ...]  # net name for PI/PO nodes, instance name for gates
    kinds: tuple[str | None, ...]
    edges: np.ndarray  # (E, 2) int64, lexicographically sorted
    catalog: CellCatalog = field(default_factory=default_catalog)

    @property
    def n(self) -> int:
        return len(self.roles)

    @cached_property
    def fanin(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges.tolist():
            out[v].append(u)
        return tuple(tuple(x) for x in out)

    @cached_property
    def fanout(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges.tolist():
            out[u].append(v)
        return tuple(tuple(x) for x in out)

    @cached_property
    def load_count(self) -> np.ndarray:
        """Number of gate fan-outs per node; PO ports do not load a driver."""
        roles = self.roles
        return np.array([sum(1 for v in fo if roles[v] == GATE) for fo in self.fanout], dtype=np.int64)

    @cached_property
    def is_sequential(self) -> np.ndarray:
        seq = {k.name for k in self.catalog if k.is_sequential}
        return np.array([k in seq for k in self.kinds], dtype=bool)

    @cached_property
    def features(self) -> np.ndarray:
        return encode_features(self, self.catalog)

    @cached_property
    def feature_index(self) -> np.ndarray:
        return self.features.argmax(axis=1)

    @cached_property
    def gate_node(self) -> dict[str, int]:
        """Instance name -> node id."""
        return {lab: i for i, (lab, r) in enumerate(zip(self.labels, self.roles)) if r == GATE}

    @cached_property
    def topo_order(self) -> np.ndarray:
        """Topological order of the combinational graph (edges into sequential nodes cut)."""
        seq = self.is_sequential
        indeg = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges.tolist():
            if not seq[v]:
                indeg[v] += 1
        ready = deque(i for i in range(self.n) if indeg[i] == 0)
        order = []
        fanout = self.fanout
        while ready:
            u = ready.popleft()
            order.append(u)
            for v in fanout[u]:
                if seq[v]:
                    continue
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
        return np.array(order, dtype=np.int64)

    @cached_property
    def endpoints(self) -> tuple[int, ...]:
        """PO ports and sequential nodes, ascending."""
        seq = self.is_sequential
        return tuple(i for i, r in enumerate(self.roles) if r == PO or seq[i])

    @cached_property
    def undirected(self) -> tuple[tuple[int, ...], ...]:
        adj: list[set[int]] = [set() for _ in range(self.n)]
        for u, v in self.edges.tolist():
            adj[u].add(v)
            adj[v].add(u)
        return tuple(tuple(sorted(a)) for a in adj)


def build_graph(netlist: Netlist, catalog: CellCatalog | None = None) -> CircuitGraph:
    n_pi, n_po = len(netlist.primary_inputs), len(netlist.primary_outputs)
    roles = [PI] * n_pi + [PO] * n_po + [GATE] * len(netlist.gates)
    labels = [*netlist.primary_inputs, *netlist.primary_outputs, *(g.instance_name for g in netlist.gates)]
    kinds = [None] * (n_pi + n_po) + [g.kind.name for g in netlist.gates]

    driver = {net: i for i, net in enumerate(netlist.primary_inputs)}
    base = n_pi + n_po
    for j, gate in enumerate(netlist.gates):
        driver[gate.output_net] = base + j
    edges = set()
    for j, gate in enumerate(netlist.gates):
        for net in gate.input_nets:
            edges.add((driver[net], base + j))
    for j, net in enumerate(netlist.primary_outputs):
        edges.add((driver[net], n_pi + j))
    arr = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    return CircuitGraph(netlist, tuple(roles), tuple(labels), tuple(kinds), arr, catalog or default_catalog())


def encode_features(graph: CircuitGraph, catalog: CellCatalog) -> np.ndarray:
    """One-hot X (n x k): Boolean-function columns in catalog order, then PI, then PO."""
    k = catalog.feature_length
    X = np.zeros((graph.n, k), dtype=np.int64)
    for i, (role, kind) in enumerate(zip(graph.roles, graph.kinds)):
        if role == PI:
            X[i, k - 2] = 1
        elif role == PO:
            X[i, k - 1] = 1
        else:
            X[i, catalog.function_index(kind)] = 1
    return X


@dataclass(frozen=True)
class TimingPath:
    start_point: int
    end_point: int
    gates: tuple[int, ...]  # combinational node ids, launch to capture
    baseline_delay: float  # ps

    def nodes(self) -> tuple[int, ...]:
        return (self.start_point, *self.gates, self.end_point)


def _worst_fanin(fanin: Sequence[int], arrival: np.ndarray) -> int:
    best = -1
    for u in sorted(fanin):
        if best < 0 or arrival[u] > arrival[best]:
            best = u
    return best


def endpoint_arrivals(graph: CircuitGraph, arrival: np.ndarray) -> dict[int, float]:
    """Data arrival at each endpoint: the latest arrival among its drivers."""
    fanin = graph.fanin
    return {e: float(max(arrival[u] for u in fanin[e])) for e in graph.endpoints if fanin[e]}


def extract_timing_paths(
    graph: CircuitGraph, arrival: np.ndarray, count: int, dff_only: bool = False
) -> list[TimingPath]:
    """Worst path for each of the `count` endpoints with the worst slack.

    Slack is clock_period - arrival, so worst slack is latest arrival; ties go to the
    smaller node id. Endpoints fed directly by a start point (no combinational gate) are skipped.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    seq = graph.is_sequential
    fanin = graph.fanin
    ends = endpoint_arrivals(graph, arrival)
    if dff_only:
        ends = {e: a for e, a in ends.items() if seq[e]}
    candidates = []
    for e, a in ends.items():
        d = _worst_fanin(fanin[e], arrival)
        if graph.roles[d] == GATE and not seq[d]:
            candidates.append((-a, e))
    if not candidates:
        raise NoEndpoints(f"{graph.netlist.name}: no endpoint is reached through a combinational gate")
    candidates.sort()
    paths = []
    for neg_a, e in candidates[:count]:
        gates = []
        cur = _worst_fanin(fanin[e], arrival)
        while graph.roles[cur] == GATE and not seq[cur]:
            gates.append(cur)
            cur = _worst_fanin(fanin[cur], arrival)
        paths.append(TimingPath(cur, e, tuple(reversed(gates)), -neg_a))
    return paths


@dataclass(frozen=True, eq=False)
class PathSubgraph:
    nodes: np.ndarray  # parent node ids, ascending
    edges: np.ndarray  # (E, 2) parent node ids, induced, lexicographic
    target_mask: np.ndarray  # bool per node
    feature_index: np.ndarray  # one-hot column per node
    num_features: int
    label: object = None

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def features(self) -> np.ndarray:
        X = np.zeros((self.n, self.num_features), dtype=np.int64)
        X[np.arange(self.n), self.feature_index] = 1
        return X

    def local_edges(self) -> np.ndarray:
        return np.searchsorted(self.nodes, self.edges).reshape(-1, 2)

    def in_degrees(self) -> np.ndarray:
        return np.bincount(self.local_edges()[:, 1], minlength=self.n)

    def __eq__(self, other):
        if not isinstance(other, PathSubgraph):
            return NotImplemented
        return (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.target_mask, other.target_mask)
            and np.array_equal(self.feature_index, other.feature_index)
            and self.num_features == other.num_features
            and _label_eq(self.label, other.label)
        )


def _label_eq(a, b) -> bool:
    if a is None or b is None:
        return a is b
    return np.array_equal(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def hop_ball(graph: CircuitGraph, sources: Sequence[int], h: int) -> list[int]:
    """Nodes within undirected distance h of any source (multi-source BFS), ascending."""
    adj = graph.undirected
    dist = {s: 0 for s in sources}
    frontier = list(dist)
    for depth in range(1, h + 1):
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = depth
                    nxt.append(v)
        frontier = nxt
    return sorted(dist)


def extract_enclosing_subgraph(graph: CircuitGraph, path: TimingPath, h: int) -> PathSubgraph:
    if h < 0:
        raise ValueError("h must be >= 0")
    if not path.gates:
        raise ValueError("path has no combinational gates")
    nodes = np.array(hop_ball(graph, path.gates, h), dtype=np.int64)
    inside = np.zeros(graph.n, dtype=bool)
    inside[nodes] = True
    E = graph.edges
    edges = E[inside[E[:, 0]] & inside[E[:, 1]]] if len(E) else E.reshape(0, 2)
    target = np.isin(nodes, np.array(path.gates, dtype=np.int64))
    return PathSubgraph(nodes, edges, target, graph.feature_index[nodes], graph.catalog.feature_length)


# --------------------------------------------------------------------------- batch-file records


def subgraph_to_record(sub: PathSubgraph, design: str, path_index: int) -> dict:
    rec = {
        "design": design,
        "path_index": int(path_index),
        "num_features": int(sub.num_features),
        "nodes": [
            {"id": int(i), "feature_index": int(f), "target": bool(t)}
            for i, f, t in zip(sub.nodes.tolist(), sub.feature_index.tolist(), sub.target_mask.tolist())
        ],
        "edges": sub.edges.tolist(),
    }
    if sub.label is not None:
        lab = np.asarray(sub.label, dtype=float)
        rec["label"] = float(lab) if lab.ndim == 0 else lab.tolist()
    return rec


def subgraph_from_record(rec: dict, where: str = "$") -> tuple[PathSubgraph, str, int]:
    if not isinstance(rec, dict):
        raise SchemaError(where, "expected object")
    try:
        design = rec["design"]
        path_index = rec["path_index"]
        nodes = rec["nodes"]
        edges = rec["edges"]
    except KeyError as exc:
        raise SchemaError(f"{where}.{exc.args[0]}", "missing") from None
    if not isinstance(design, str):
        raise SchemaError(f"{where}.design", "expected string")
    if not isinstance(path_index, int) or isinstance(path_index, bool):
        raise SchemaError(f"{where}.path_index", "expected integer")
    if not isinstance(nodes, list) or not nodes:
        raise SchemaError(f"{where}.nodes", "expected non-empty array")
    try:
        ids = np.array([nd["id"] for nd in nodes], dtype=np.int64)
        fidx = np.array([nd["feature_index"] for nd in nodes], dtype=np.int64)
        target = np.array([bool(nd["target"]) for nd in nodes], dtype=bool)
    except (KeyError, TypeError, ValueError):
        raise SchemaError(f"{where}.nodes", "each node needs id, feature_index, target") from None
    if np.any(np.diff(ids) <= 0):
        raise SchemaError(f"{where}.nodes", "node ids must be strictly ascending")
    try:
        e = np.array(edges, dtype=np.int64).reshape(-1, 2)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}.edges", "expected [[u, v], ...]") from None
    if len(e) and not np.all(np.isin(e, ids)):
        raise SchemaError(f"{where}.edges", "edge endpoint not among nodes")
    k = rec.get("num_features", int(fidx.max()) + 1)
    if not isinstance(k, int) or fidx.min() < 0 or fidx.max() >= k:
        raise SchemaError(f"{where}.num_features", "feature_index out of range")
    label = rec.get("label")
    if label is not None:
        try:
            lab = np.asarray(label, dtype=float)
        except (TypeError, ValueError):
            raise SchemaError(f"{where}.label", "expected number or [mu, sigma, max]") from None
        if not (lab.ndim == 0 or lab.shape == (3,)) or not np.all(np.isfinite(lab)):
            raise SchemaError(f"{where}.label", "expected finite number or [mu, sigma, max]")
        label = float(lab) if lab.ndim == 0 else tuple(lab.tolist())
    return PathSubgraph(ids, e, target, fidx, k, label), design, path_index
