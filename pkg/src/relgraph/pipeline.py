"""Stage functions shared by the command line and the experiment harness.

Every stage reads and writes plain files so intermediate artifacts can be audited, and
every output is a pure function of the inputs and the seed.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import LabeledSample, Split
from .errors import IoError, SchemaError, ZeroTrueValue
from .graph import CircuitGraph, TimingPath, extract_enclosing_subgraph, extract_timing_paths
from .netlist import Netlist
from .pna import ModelConfig, PnaModel, TrainConfig, compute_delta, mae, mape, train
from .sta import AgingParams, DelayLibrary, compute_arrivals, label_paths_aging, label_paths_variation
from .synth import SynthConfig, generate_synthetic_netlist


def derive_seed(seed: int, *keys: int | str) -> int:
    """Independent 32-bit seed for a named sub-task of a run."""
    ints = [k if isinstance(k, int) else zlib.crc32(k.encode()) for k in keys]
    return int(np.random.SeedSequence(seed, spawn_key=tuple(ints)).generate_state(1)[0])


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def write_text(path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from exc


def write_jsonl(path, records) -> None:
    write_text(path, "".join(json.dumps(r) + "\n" for r in records))


def read_json(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}", f"invalid JSON ({exc.msg})") from None


def read_jsonl(path) -> list[dict]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from exc
    out = []
    for i, line in enumerate(lines, start=1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{i}", f"invalid JSON ({exc.msg})") from None
    return out


# --------------------------------------------------------------------------- synthetic designs


def synth_designs(n_designs: int, n_gates: int, seed: int, depth: int = 16) -> list[Netlist]:
    return [
        generate_synthetic_netlist(SynthConfig(n_gates, depth, derive_seed(seed, "synth", i), name=f"syn{i}"))
        for i in range(n_designs)
    ]


# --------------------------------------------------------------------------- paths


def paths_document(graph: CircuitGraph, paths: Sequence[TimingPath]) -> dict:
    period_ps = graph.netlist.clock_period * 1000.0
    return {
        "design": graph.netlist.name,
        "clock_period_ps": period_ps,
        "paths": [
            {
                "path_index": i,
                "start": graph.labels[p.start_point],
                "end": graph.labels[p.end_point],
                "nodes": list(p.nodes()),
                "gates": [graph.labels[g] for g in p.gates],
                "baseline_ps": p.baseline_delay,
                "slack_ps": period_ps - p.baseline_delay,
            }
            for i, p in enumerate(paths)
        ],
    }


def paths_from_document(graph: CircuitGraph, doc: dict, where: str = "$") -> list[TimingPath]:
    if not isinstance(doc, dict) or not isinstance(doc.get("paths"), list):
        raise SchemaError(f"{where}.paths", "expected a path list")
    if doc.get("design") != graph.netlist.name:
        raise SchemaError(f"{where}.design", f"paths belong to {doc.get('design')!r}, not {graph.netlist.name!r}")
    out = []
    for i, rec in enumerate(doc["paths"]):
        at = f"{where}.paths[{i}]"
        try:
            nodes = [int(x) for x in rec["nodes"]]
            names = [rec["start"], *rec["gates"], rec["end"]]
            baseline = float(rec["baseline_ps"])
        except (KeyError, TypeError, ValueError):
            raise SchemaError(at, "needs nodes, start, gates, end, baseline_ps") from None
        if rec.get("path_index") != i:
            raise SchemaError(f"{at}.path_index", f"expected {i}")
        if len(nodes) != len(names) or len(nodes) < 3:
            raise SchemaError(f"{at}.nodes", "must list start, at least one gate, and end")
        for nid, name in zip(nodes, names):
            if not 0 <= nid < graph.n or graph.labels[nid] != name:
                raise SchemaError(f"{at}.nodes", f"node {nid} is not {name!r} in {graph.netlist.name}")
        out.append(TimingPath(nodes[0], nodes[-1], tuple(nodes[1:-1]), baseline))
    return out


def find_paths(graph: CircuitGraph, lib: DelayLibrary, count: int, dff_only: bool = False) -> list[TimingPath]:
    return extract_timing_paths(graph, compute_arrivals(graph, lib), count, dff_only)


# --------------------------------------------------------------------------- labels


def label_records(
    graph: CircuitGraph,
    paths: Sequence[TimingPath],
    lib: DelayLibrary,
    mode: str,
    seed: int,
    n_instances: int = 100,
    timing: str = "endpoint",
    threads: int = 1,
) -> list[dict]:
    design = graph.netlist.name
    if mode == "variation":
        labels = label_paths_variation(graph, paths, lib, n_instances, seed, timing, threads)
        values = [{"mu": lab.mu, "sigma": lab.sigma, "max": lab.max} for lab in labels]
        key = "label"
    elif mode == "aging":
        values = [float(x) for x in label_paths_aging(graph, paths, lib, AgingParams(), seed, timing)]
        key = "aging_pct"
    else:
        raise ValueError("mode must be 'variation' or 'aging'")
    return [
        {"design": design, "path_index": i, "baseline_ps": p.baseline_delay, key: v}
        for i, (p, v) in enumerate(zip(paths, values))
    ]


def label_value(rec: dict, where: str = "$"):
    """(mu, sigma, max) tuple or aging float from a label record."""
    if "label" in rec:
        lab = rec["label"]
        try:
            return (float(lab["mu"]), float(lab["sigma"]), float(lab["max"]))
        except (KeyError, TypeError, ValueError):
            raise SchemaError(f"{where}.label", "expected {mu, sigma, max}") from None
    if "aging_pct" in rec:
        try:
            return float(rec["aging_pct"])
        except (TypeError, ValueError):
            raise SchemaError(f"{where}.aging_pct", "expected a number") from None
    raise SchemaError(where, "record has neither label nor aging_pct")


# --------------------------------------------------------------------------- samples


def build_samples(
    graph: CircuitGraph, paths: Sequence[TimingPath], labels: Sequence[dict], h: int
) -> list[LabeledSample]:
    if len(labels) != len(paths):
        raise SchemaError("$", f"{len(labels)} label records for {len(paths)} paths")
    out = []
    for i, (p, rec) in enumerate(zip(paths, labels)):
        where = f"$[{i}]"
        if rec.get("design") != graph.netlist.name or rec.get("path_index") != i:
            raise SchemaError(where, f"expected record for {graph.netlist.name}[{i}]")
        out.append(LabeledSample(extract_enclosing_subgraph(graph, p, h), label_value(rec, where), graph.netlist.name, i))
    return out


# --------------------------------------------------------------------------- training


@dataclass
class TrainResult:
    model: PnaModel
    log: list[dict]
    report: dict


def fit(split: Split, target: str, config: TrainConfig, in_features: int, on_epoch=None) -> TrainResult:
    def pairs(part):
        return [(s.subgraph, s.target(target)) for s in part]

    delta = compute_delta([s.subgraph.in_degrees() for s in split.train])
    model = PnaModel(ModelConfig(in_features, delta=delta), seed=config.seed)
    model, rep = train(model, pairs(split.train), pairs(split.val), config, on_epoch)
    report = {
        "target": target,
        "epochs": config.epochs,
        "selected_epoch": rep.selected_epoch,
        "best_val_mae": rep.val_mae[rep.selected_epoch - 1],
        "n_train": len(split.train),
        "n_val": len(split.val),
        "delta": delta,
    }
    return TrainResult(model, rep.log_records(), report)


def predictions(model: PnaModel, samples: Sequence[LabeledSample]) -> list[dict]:
    pred = model.predict([s.subgraph for s in samples])
    return [{"design": s.design, "path_index": s.path_index, "prediction": float(p)} for s, p in zip(samples, pred)]


def evaluate(pred_records: Sequence[dict], truth: dict[tuple[str, int], float]) -> dict:
    y, yhat = [], []
    for i, rec in enumerate(pred_records):
        key = (rec.get("design"), rec.get("path_index"))
        if key not in truth:
            raise SchemaError(f"$[{i}]", f"no label for {key}")
        y.append(truth[key])
        yhat.append(float(rec["prediction"]))
    out = {"n": len(y), "mae": mae(y, yhat)}
    try:
        out["mape"] = mape(y, yhat)
    except ZeroTrueValue:
        out["mape"] = None
    return out


def baseline_mae(split: Split, target: str) -> float:
    """MAE of always predicting the training-set mean on the test set."""
    mean = float(np.mean([s.target(target) for s in split.train]))
    return mae([s.target(target) for s in split.test], [mean] * len(split.test))
