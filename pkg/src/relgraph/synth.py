"""Random layered gate-level benchmarks with flip-flop boundaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netlist import CellCatalog, GateInstance, Netlist, default_catalog

# relative frequency of combinational kinds; roughly what a delay-driven synthesis run emits
KIND_WEIGHTS = {
    "INV": 3.0,
    "BUF": 0.5,
    "NAND2": 4.0,
    "NOR2": 2.5,
    "AND2": 1.5,
    "OR2": 1.0,
    "XOR2": 0.8,
    "XNOR2": 0.8,
    "AOI21": 1.5,
    "OAI21": 1.5,
    "AND3": 0.6,
}


@dataclass(frozen=True)
class SynthConfig:
    n_gates: int
    depth: int = 16
    seed: int = 0
    name: str | None = None
    dff_fraction: float = 0.2
    po_fraction: float = 0.3
    clock_period_ns: float | None = None

    def __post_init__(self):
        if self.n_gates < 1:
            raise ValueError("n_gates must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")


def generate_synthetic_netlist(config: SynthConfig, catalog: CellCatalog | None = None) -> Netlist:
    """Layered DAG: PIs and flip-flop outputs feed layer 1, each gate takes its first input
    from the previous layer and side inputs from up to three layers back; flip-flop inputs
    tap the deeper half. Gates without fan-out, plus a random `po_fraction`, become POs.
    ``n_gates`` counts every instance, flip-flops included."""
    catalog = catalog or default_catalog()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0x5E,)))
    seq_kinds = [k for k in catalog if k.is_sequential]
    comb_kinds = [k for k in catalog if not k.is_sequential]
    weights = np.array([KIND_WEIGHTS.get(k.name, 1.0) for k in comb_kinds])
    weights /= weights.sum()

    n_ff = int(round(config.dff_fraction * config.n_gates)) if seq_kinds else 0
    n_ff = min(n_ff, config.n_gates - 1)
    n_comb = config.n_gates - n_ff
    depth = min(config.depth, n_comb)
    n_pi = max(2, int(round(np.sqrt(config.n_gates))))
    name = config.name or f"synth_{config.n_gates}_{config.seed}"

    pis = [f"pi{i}" for i in range(n_pi)]
    ff_q = [f"q{i}" for i in range(n_ff)]
    layers: list[list[str]] = [pis + ff_q]
    per_layer = np.full(depth, n_comb // depth)
    per_layer[: n_comb % depth] += 1

    gates: list[GateInstance] = []
    used: set[str] = set()
    g = 0
    for L in range(1, depth + 1):
        layer = []
        for _ in range(per_layer[L - 1]):
            kind = comb_kinds[rng.choice(len(comb_kinds), p=weights)]
            first = layers[L - 1][rng.integers(len(layers[L - 1]))]
            inputs = [first]
            pool_layers = list(range(max(0, L - 3), L))
            tries = 0
            while len(inputs) < kind.input_pin_count:
                src_layer = layers[pool_layers[rng.integers(len(pool_layers))]]
                net = src_layer[rng.integers(len(src_layer))]
                tries += 1
                if net not in inputs:
                    inputs.append(net)
                elif tries > 20:
                    # tiny designs may not offer enough distinct nets
                    inputs.append(net)
            out = f"n{g}"
            gates.append(GateInstance(f"g{g}", kind, tuple(inputs), out))
            used.update(inputs)
            layer.append(out)
            g += 1
        layers.append(layer)

    comb_nets = [net for layer in layers[1:] for net in layer]
    deep = [net for layer in layers[1 + depth // 2 :] for net in layer] or comb_nets
    for i in range(n_ff):
        d = deep[rng.integers(len(deep))]
        used.add(d)
        gates.append(GateInstance(f"ff{i}", seq_kinds[0], (d,), ff_q[i]))

    extra = rng.random(len(comb_nets)) < config.po_fraction
    pos = [net for net, x in zip(comb_nets, extra) if x or net not in used]
    if not pos:
        pos = [comb_nets[-1]]
    period = config.clock_period_ns if config.clock_period_ns is not None else 0.02 * depth
    return Netlist(name, tuple(pis), tuple(pos), tuple(gates), period)
