"""Graph-level PNA regressor: embedding, four PNA/batch-norm/ReLU blocks, readout, MLP head."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..errors import ShapeMismatch
from ..graph import PathSubgraph
from . import autograd as ag
from .autograd import Tensor
from .layers import GraphBatch, PnaLayerConfig, degree_scalers, init_pna_layer, pna_layer_forward


@dataclass(frozen=True)
class ModelConfig:
    in_features: int  # one-hot width k (without the optional target-mask column)
    hidden: int = 75
    n_layers: int = 4
    towers: int = 5
    head: tuple[int, ...] = (50, 25)
    readout: str = "sum"  # or "mean"
    append_target_mask: bool = False
    epsilon: float = 1e-5
    delta: float = 1.0
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "head", tuple(self.head))
        if self.readout not in ("sum", "mean"):
            raise ValueError("readout must be 'sum' or 'mean'")
        PnaLayerConfig(self.hidden, self.hidden, self.towers, self.epsilon, self.delta)

    @property
    def layer(self) -> PnaLayerConfig:
        return PnaLayerConfig(self.hidden, self.hidden, self.towers, self.epsilon, self.delta)

    @property
    def input_width(self) -> int:
        return self.in_features + int(self.append_target_mask)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["head"] = list(self.head)
        return d


class PnaModel:
    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x1A17,)))
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}
        # predictions are target_shift + target_scale * network output
        self.target_shift = 0.0
        self.target_scale = 1.0

        def uni(name, shape, fan_in):
            bound = np.sqrt(1.0 / fan_in)
            self.params[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

        h = config.hidden
        uni("embed.W", (config.input_width, h), config.input_width)
        uni("embed.b", (h,), config.input_width)
        for i in range(config.n_layers):
            for name, p in init_pna_layer(config.layer, rng).items():
                self.params[f"pna{i}.{name}"] = p
            self.params[f"bn{i}.gamma"] = Tensor(np.ones(h), requires_grad=True)
            self.params[f"bn{i}.beta"] = Tensor(np.zeros(h), requires_grad=True)
            self.buffers[f"bn{i}.running_mean"] = np.zeros(h)
            self.buffers[f"bn{i}.running_var"] = np.ones(h)
        dims = (h, *config.head, 1)
        for j, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            uni(f"head{j}.W", (a, b), a)
            uni(f"head{j}.b", (b,), a)

    # ------------------------------------------------------------------ batching

    def make_batch(self, subgraphs: Sequence[PathSubgraph]) -> GraphBatch:
        k = self.config.in_features
        graphs = []
        for s in subgraphs:
            if s.num_features != k:
                raise ShapeMismatch(f"subgraph has {s.num_features} features, model expects {k}")
            x = np.zeros((s.n, self.config.input_width))
            x[np.arange(s.n), s.feature_index] = 1.0
            if self.config.append_target_mask:
                x[:, k] = s.target_mask
            graphs.append((x, s.local_edges()))
        return GraphBatch.from_graphs(graphs)

    # ------------------------------------------------------------------ forward

    def forward(self, batch: GraphBatch, train: bool = False) -> Tensor:
        """Predictions of shape (n_graphs,). Batch norm uses batch statistics (and updates the
        running ones) when ``train``; running statistics otherwise."""
        cfg = self.config
        P = self.params
        if batch.x.shape[1] != cfg.input_width:
            raise ShapeMismatch(f"expected {cfg.input_width} input features, got {batch.x.shape[1]}")
        scalers = degree_scalers(batch.in_degree, cfg.delta)
        z = ag.affine(Tensor(batch.x), P["embed.W"], P["embed.b"])
        for i in range(cfg.n_layers):
            layer_params = {k[len(f"pna{i}.") :]: v for k, v in P.items() if k.startswith(f"pna{i}.")}
            z = pna_layer_forward(z, batch, cfg.layer, layer_params, scalers)
            z = self._batch_norm(i, z, train)
            z = ag.relu(z)
        g = ag.spmm(batch.pool(cfg.readout), z)
        n_head = len(cfg.head) + 1
        for j in range(n_head):
            g = ag.affine(g, P[f"head{j}.W"], P[f"head{j}.b"])
            if j < n_head - 1:
                g = ag.relu(g)
        return ag.reshape(g, (batch.n_graphs,))

    def _batch_norm(self, i: int, z: Tensor, train: bool) -> Tensor:
        cfg = self.config
        gamma, beta = self.params[f"bn{i}.gamma"], self.params[f"bn{i}.beta"]
        rm, rv = f"bn{i}.running_mean", f"bn{i}.running_var"
        if train:
            out, mu, var = ag.batch_norm_train(z, gamma, beta, cfg.bn_eps)
            n = z.shape[0]
            unbiased = var * n / (n - 1) if n > 1 else var
            m = cfg.bn_momentum
            self.buffers[rm] = (1 - m) * self.buffers[rm] + m * mu
            self.buffers[rv] = (1 - m) * self.buffers[rv] + m * unbiased
            return out
        scale = 1.0 / np.sqrt(self.buffers[rv] + cfg.bn_eps)
        return ag.add(ag.mul(ag.mul(ag.sub(z, self.buffers[rm]), scale), gamma), beta)

    def predict(self, subgraphs: Sequence[PathSubgraph], batch_size: int = 64) -> np.ndarray:
        out = []
        for lo in range(0, len(subgraphs), batch_size):
            batch = self.make_batch(subgraphs[lo : lo + batch_size])
            out.append(self.forward(batch, train=False).data)
        raw = np.concatenate(out) if out else np.zeros(0)
        return self.target_shift + self.target_scale * raw

    # ------------------------------------------------------------------ state

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state(self) -> dict[str, np.ndarray]:
        s = {k: v.data.copy() for k, v in self.params.items()}
        s.update({k: v.copy() for k, v in self.buffers.items()})
        return s

    def load_state(self, state: dict[str, np.ndarray]):
        for k, p in self.params.items():
            if state[k].shape != p.data.shape:
                raise ShapeMismatch(f"{k}: expected {p.data.shape}, got {state[k].shape}")
            p.data = np.array(state[k], dtype=np.float64)
        for k in self.buffers:
            self.buffers[k] = np.array(state[k], dtype=np.float64)

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())
