"""Adam training with mean-absolute-error loss and best-validation snapshot selection."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import EmptyDataset, LengthMismatch, ZeroTrueValue
from ..graph import PathSubgraph
from . import autograd as ag
from .model import PnaModel


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    seed: int = 0
    standardize: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_mae: list[float] = field(default_factory=list)
    selected_epoch: int = 0  # 1-based
    wall_time: float = 0.0

    def log_records(self) -> list[dict]:
        return [
            {"epoch": i + 1, "train_mae": tl, "val_mae": vm}
            for i, (tl, vm) in enumerate(zip(self.train_loss, self.val_mae))
        ]


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                g = np.zeros_like(p.data)
            else:
                g = p.grad
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            p.data = p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def mae(y, yhat) -> float:
    y, yhat = np.asarray(y, dtype=float), np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.size == 0:
        raise LengthMismatch(f"need equal non-empty lengths, got {y.size} and {yhat.size}")
    return float(np.abs(y - yhat).mean())


def mape(y, yhat) -> float:
    y, yhat = np.asarray(y, dtype=float), np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.size == 0:
        raise LengthMismatch(f"need equal non-empty lengths, got {y.size} and {yhat.size}")
    if np.any(y == 0):
        raise ZeroTrueValue("MAPE is undefined when a true value is 0")
    return float(100.0 * np.abs((y - yhat) / y).mean())


def train(
    model: PnaModel,
    train_set: Sequence[tuple[PathSubgraph, float]],
    val_set: Sequence[tuple[PathSubgraph, float]],
    config: TrainConfig,
    on_epoch: Callable[[int, float, float], None] | None = None,
) -> tuple[PnaModel, TrainReport]:
    """Train in place and return the model restored to its best-validation snapshot."""
    if not train_set or not val_set:
        raise EmptyDataset("training and validation sets must be non-empty")
    tr_graphs = [g for g, _ in train_set]
    tr_y = np.array([y for _, y in train_set], dtype=float)
    va_graphs = [g for g, _ in val_set]
    va_y = np.array([y for _, y in val_set], dtype=float)
    if not (np.all(np.isfinite(tr_y)) and np.all(np.isfinite(va_y))):
        raise ValueError("labels must be finite")

    if config.standardize:
        model.target_shift = float(tr_y.mean())
        model.target_scale = float(tr_y.std()) or 1.0
    scale, shift = model.target_scale, model.target_shift
    target = (tr_y - shift) / scale

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(config.seed, spawn_key=(0x7A1,))))
    opt = Adam(model.params, config.lr, config.beta1, config.beta2, config.adam_eps)
    report = TrainReport()
    best_state, best_mae = None, np.inf
    t0 = time.perf_counter()
    n = len(tr_graphs)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses, weights = [], []
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            batch = model.make_batch([tr_graphs[i] for i in idx])
            model.zero_grad()
            pred = model.forward(batch, train=True)
            loss = ag.mean_abs_error(pred, target[idx])
            loss.backward()
            opt.step()
            losses.append(float(loss.data) * scale)
            weights.append(len(idx))
        val = mae(va_y, model.predict(va_graphs))
        report.train_loss.append(float(np.average(losses, weights=weights)))
        report.val_mae.append(val)
        if val < best_mae:
            best_mae, best_state = val, model.state()
            report.selected_epoch = epoch
        if on_epoch is not None:
            on_epoch(epoch, report.train_loss[-1], val)
    model.zero_grad()
    model.load_state(best_state)
    report.wall_time = time.perf_counter() - t0
    return model, report
