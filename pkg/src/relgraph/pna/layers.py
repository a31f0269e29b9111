"""Principal-neighbourhood aggregation: aggregators, degree scalers, graph batching, the PNA layer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import NoPositiveDegree, ShapeMismatch
from . import autograd as ag
from .autograd import Tensor, _result

AGGREGATORS = ("mean", "std", "max", "min")
SCALERS = ("identity", "amplification", "attenuation")


@dataclass(frozen=True)
class PnaLayerConfig:
    f_in: int = 75
    f_out: int = 75
    towers: int = 5
    epsilon: float = 1e-5
    delta: float = 1.0

    def __post_init__(self):
        if self.f_in % self.towers or self.f_out % self.towers:
            raise ValueError("f_in and f_out must be divisible by the number of towers")
        if not self.delta > 0 or not self.epsilon > 0:
            raise ValueError("delta and epsilon must be positive")

    @property
    def tower_in(self) -> int:
        return self.f_in // self.towers

    @property
    def tower_out(self) -> int:
        return self.f_out // self.towers


def degree_scalers(d, delta: float) -> np.ndarray:
    """[identity, amplification, attenuation] = [1, S(d, 1), S(d, -1)] with
    S(d, a) = (log(d + 1) / delta) ** a; every scaler is 1 for d = 0. Vectorizes over d."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("degree must be non-negative")
    ratio = np.where(d > 0, np.log1p(d) / delta, 1.0)
    return np.stack([np.ones_like(ratio), ratio, 1.0 / ratio], axis=-1)


def compute_delta(in_degrees: Sequence[np.ndarray]) -> float:
    """Mean of log(d + 1) over every node of every training graph."""
    d = np.concatenate([np.asarray(x, dtype=np.float64).ravel() for x in in_degrees]) if in_degrees else np.zeros(0)
    if not np.any(d > 0):
        raise NoPositiveDegree("training graphs have no node with positive in-degree")
    return float(np.log1p(d).mean())


class GraphBatch:
    """Disjoint union of graphs with edges sorted by (destination, source).

    The k-th incoming message of node v sits at row k*n + v of a padded (D * n) layout,
    where D is the largest in-degree; the aggregators reduce over the D blocks.
    """

    def __init__(self, x: np.ndarray, edges: np.ndarray, graph_of_node: np.ndarray, n_graphs: int):
        x = np.asarray(x, dtype=np.float64)
        n = x.shape[0]
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((edges[:, 0], edges[:, 1]))
        edges = edges[order]
        self.x = x
        self.n = n
        self.edges = edges
        self.n_graphs = n_graphs
        self.graph_of_node = np.asarray(graph_of_node, dtype=np.int64)
        self.src, self.dst = edges[:, 0], edges[:, 1]
        E = len(edges)
        self.in_degree = np.bincount(self.dst, minlength=n)
        self.max_degree = max(int(self.in_degree.max(initial=0)), 1)
        starts = np.concatenate([[0], np.cumsum(self.in_degree)[:-1]])
        rank = np.arange(E) - starts[self.dst]
        self.slot = rank * n + self.dst
        # valid[k] marks nodes with more than k incoming edges
        self.valid = np.arange(self.max_degree)[:, None] < self.in_degree[None, :]
        # gather indices into the edge values extended by one zero row (index E): unused
        # slots read zero, or in the "repeat" variant the node's first message, so that
        # max/min need no masking
        self.slot_zero = np.full(self.max_degree * n, E, dtype=np.int64)
        self.slot_zero[self.slot] = np.arange(E)
        first = np.where(self.in_degree > 0, starts, E)
        self.slot_repeat = np.tile(first, self.max_degree)
        self.slot_repeat[self.slot] = np.arange(E)
        self.scatter_src = sp.csr_matrix((np.ones(E), (self.src, np.arange(E))), shape=(n, E))
        self.scatter_dst = sp.csr_matrix((np.ones(E), (self.dst, np.arange(E))), shape=(n, E))
        self.has_neighbors = (self.in_degree > 0).astype(np.float64)
        self.graph_sizes = np.bincount(self.graph_of_node, minlength=n_graphs)

    def pool(self, mode: str = "sum") -> sp.csr_matrix:
        w = np.ones(self.n) if mode == "sum" else 1.0 / self.graph_sizes[self.graph_of_node]
        return sp.csr_matrix((w, (self.graph_of_node, np.arange(self.n))), shape=(self.n_graphs, self.n))

    def pad(self, values: np.ndarray, repeat: bool = False) -> np.ndarray:
        """(t, E, c) edge values -> (t, D, n, c). Unused slots hold zeros, or with ``repeat``
        the node's first message (zeros for nodes without any)."""
        t, E, c = values.shape
        ext = np.concatenate([values, np.zeros((t, 1, c))], axis=1)
        idx = self.slot_repeat if repeat else self.slot_zero
        return ext[:, idx].reshape(t, self.max_degree, self.n, c)

    @classmethod
    def from_graphs(cls, graphs: Sequence[tuple[np.ndarray, np.ndarray]]) -> "GraphBatch":
        """graphs: sequence of (features (n_i, k), local edges (E_i, 2))."""
        xs, es, owner = [], [], []
        offset = 0
        for gi, (x, e) in enumerate(graphs):
            xs.append(np.asarray(x, dtype=np.float64))
            es.append(np.asarray(e, dtype=np.int64).reshape(-1, 2) + offset)
            owner.append(np.full(len(x), gi))
            offset += len(x)
        return cls(np.concatenate(xs), np.concatenate(es), np.concatenate(owner), len(graphs))


def _scatter(A: sp.csr_matrix, g: np.ndarray) -> np.ndarray:
    """Sum tower-major edge values (t, E, c) into nodes with the (n, E) incidence matrix A."""
    t, E, c = g.shape
    flat = np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(E, t * c)
    return np.ascontiguousarray(np.asarray(A @ flat).reshape(A.shape[0], t, c).transpose(1, 0, 2))


def edge_messages(Zt: Tensor, W: Tensor, b: Tensor, batch: GraphBatch) -> Tensor:
    """Tower-major messages M(z_dst, z_src) = [z_dst, z_src] W + b for every edge.

    Zt (t, n, c), W (t, 2c, c'), b (t, c') -> (t, E, c'). The two halves of W are applied
    per node before gathering, which is the same affine map evaluated more cheaply."""
    c = Zt.shape[2]
    Wd, Ws = W.data[:, :c], W.data[:, c:]
    Pd = np.matmul(Zt.data, Wd)
    Ps = np.matmul(Zt.data, Ws)
    out = Pd[:, batch.dst] + Ps[:, batch.src] + b.data[:, None, :]

    def back(g):
        gPd = _scatter(batch.scatter_dst, g)
        gPs = _scatter(batch.scatter_src, g)
        if W.requires_grad:
            ZT = Zt.data.transpose(0, 2, 1)
            W._accumulate(np.concatenate([np.matmul(ZT, gPd), np.matmul(ZT, gPs)], axis=1))
        if b.requires_grad:
            b._accumulate(g.sum(axis=1))
        if Zt.requires_grad:
            Zt._accumulate(np.matmul(gPd, Wd.transpose(0, 2, 1)) + np.matmul(gPs, Ws.transpose(0, 2, 1)))

    return _result(out, (Zt, W, b), back)


def pna_aggregate(msg: Tensor, batch: GraphBatch, eps: float) -> Tensor:
    """Per-destination [mean, std, max, min] of incoming messages, (t, E, c) -> (t, n, 4c).

    std = sqrt(relu(E[m^2] - E[m]^2) + eps). Nodes without incoming edges get zeros in all
    four blocks. Tied maxima (minima) share the gradient equally."""
    pad = batch.pad(msg.data)
    rep = batch.pad(msg.data, repeat=True)
    D = batch.max_degree
    inv = (1.0 / np.maximum(batch.in_degree, 1))[None, :, None]
    has = batch.has_neighbors[None, :, None]
    total, squares = pad[:, 0].copy(), pad[:, 0] * pad[:, 0]
    hi, lo = rep[:, 0].copy(), rep[:, 0].copy()
    for k in range(1, D):
        total += pad[:, k]
        squares += pad[:, k] * pad[:, k]
        np.maximum(hi, rep[:, k], out=hi)
        np.minimum(lo, rep[:, k], out=lo)
    mean = total * inv
    var_raw = squares * inv - mean * mean
    positive = var_raw > 0
    root = np.sqrt(np.maximum(var_raw, 0.0) + eps)
    std = root * has
    out = np.concatenate([mean, std, hi, lo], axis=-1)

    def back(g):
        gm, gs, gh, gl = np.split(g, 4, axis=-1)
        # per-slot gradient: gm / d + 2 (m_k - mean) * dL/dvar / d
        gvar = gs * positive * (has * 0.5 * inv) / root
        gmean = gm * inv - 2.0 * mean * gvar
        valid = [batch.valid[k][None, :, None] for k in range(D)]
        hit_hi = [(rep[:, k] == hi) & valid[k] for k in range(D)]
        hit_lo = [(rep[:, k] == lo) & valid[k] for k in range(D)]
        share_hi = gh / np.maximum(sum(h.astype(np.float64) for h in hit_hi), 1.0)
        share_lo = gl / np.maximum(sum(h.astype(np.float64) for h in hit_lo), 1.0)
        gpad = np.empty_like(pad)
        for k in range(D):
            gpad[:, k] = gmean + 2.0 * pad[:, k] * gvar + hit_hi[k] * share_hi + hit_lo[k] * share_lo
        t, _, n, c = gpad.shape
        msg._accumulate(gpad.reshape(t, D * n, c)[:, batch.slot])

    return _result(out, (msg,), back)


def scaled_update(Zt: Tensor, agg: Tensor, scalers: np.ndarray, W: Tensor, b: Tensor) -> Tensor:
    """U(z, agg) = [z, s_0 agg, s_1 agg, s_2 agg] W + b per tower.

    Zt (t, n, c), agg (t, n, 4c), scalers (n, 3), W (t, 13c, c'), b (t, c') -> (t, n, c').
    Each scaler is a per-node scalar, so s (agg W_s) is used instead of (s agg) W_s and the
    scaled copies of agg are never built."""
    c = Zt.shape[2]
    t, _, co = W.shape
    a = agg.shape[2]
    W0 = W.data[:, :c]
    # (t, 4c, 3c'): the three scaler blocks side by side
    Wagg = W.data[:, c:].reshape(t, 3, a, co).transpose(0, 2, 1, 3).reshape(t, a, 3 * co)
    s = scalers.T[:, None, :, None]  # (3, 1, n, 1)
    parts = np.matmul(agg.data, Wagg).reshape(t, -1, 3, co)
    out = np.matmul(Zt.data, W0) + b.data[:, None, :]
    for k in range(3):
        out += s[k] * parts[:, :, k]

    def back(g):
        G3 = np.concatenate([s[k] * g for k in range(3)], axis=-1)
        if W.requires_grad:
            gW0 = np.matmul(Zt.data.transpose(0, 2, 1), g)
            gWagg = np.matmul(agg.data.transpose(0, 2, 1), G3)
            gWagg = gWagg.reshape(t, a, 3, co).transpose(0, 2, 1, 3).reshape(t, 3 * a, co)
            W._accumulate(np.concatenate([gW0, gWagg], axis=1))
        if b.requires_grad:
            b._accumulate(g.sum(axis=1))
        if Zt.requires_grad:
            Zt._accumulate(np.matmul(g, W0.transpose(0, 2, 1)))
        if agg.requires_grad:
            agg._accumulate(np.matmul(G3, Wagg.transpose(0, 2, 1)))

    return _result(out, (Zt, agg, W, b), back)


def aggregate_stats(messages, eps: float = 1e-5) -> np.ndarray:
    """[mean; std; max; min] of a set of f-vectors; an empty set yields zeros (length 4f)."""
    m = np.asarray(messages, dtype=np.float64)
    if m.size == 0:
        f = m.shape[-1] if m.ndim == 2 else 0
        return np.zeros(4 * f)
    m = m.reshape(len(m), -1)
    E = len(m)
    # a star: node 0 receives one edge from each of nodes 1..E
    edges = np.stack([np.arange(1, E + 1), np.zeros(E, dtype=np.int64)], axis=1)
    batch = GraphBatch(np.zeros((E + 1, 1)), edges, np.zeros(E + 1, dtype=np.int64), 1)
    return pna_aggregate(Tensor(m[None]), batch, eps).data[0, 0]


def init_pna_layer(cfg: PnaLayerConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    t, ci, co = cfg.towers, cfg.tower_in, cfg.tower_out
    n_agg = len(AGGREGATORS) * len(SCALERS)

    def uni(shape, fan_in):
        bound = np.sqrt(1.0 / fan_in)
        return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

    return {
        "msg.W": uni((t, 2 * ci, ci), 2 * ci),
        "msg.b": uni((t, ci), 2 * ci),
        "upd.W": uni((t, (1 + n_agg) * ci, co), (1 + n_agg) * ci),
        "upd.b": uni((t, co), (1 + n_agg) * ci),
        "mix.W": uni((cfg.f_out, cfg.f_out), cfg.f_out),
        "mix.b": uni((cfg.f_out,), cfg.f_out),
    }


def pna_layer_forward(
    Z: Tensor, batch: GraphBatch, cfg: PnaLayerConfig, params: dict[str, Tensor], scalers: np.ndarray | None = None
) -> Tensor:
    """One PNA layer with towers.

    Per tower, edge (u, v) carries M(z_v, z_u); node v aggregates its incoming messages with
    the four statistics, applies the three degree scalers, and updates with
    U(z_v, aggregated). Tower outputs are concatenated and mixed by an affine map.
    Rows of upd.W are ordered [self, identity x 4 aggregators, amplification x 4,
    attenuation x 4]; the aggregator order is mean, std, max, min.
    """
    n = batch.n
    if Z.shape != (n, cfg.f_in):
        raise ShapeMismatch(f"expected node embeddings of shape {(n, cfg.f_in)}, got {Z.shape}")
    t, ci = cfg.towers, cfg.tower_in
    if scalers is None:
        scalers = degree_scalers(batch.in_degree, cfg.delta)
    Zt = ag.transpose(ag.reshape(Z, (n, t, ci)), (1, 0, 2))
    msg = edge_messages(Zt, params["msg.W"], params["msg.b"], batch)
    agg = pna_aggregate(msg, batch, cfg.epsilon)
    out = scaled_update(Zt, agg, scalers, params["upd.W"], params["upd.b"])
    out = ag.reshape(ag.transpose(out, (1, 0, 2)), (n, cfg.f_out))
    return ag.affine(out, params["mix.W"], params["mix.b"])
