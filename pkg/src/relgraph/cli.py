"""Command-line front end: one subcommand per pipeline stage plus ``all``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import pipeline as pl
from .dataset import (
    SCENARIOS,
    TARGETS,
    SplitSpec,
    apply_manifest,
    load_samples,
    make_split,
    sample_to_record,
    split_manifest,
)
from .errors import IoError, NetlistError, RelGraphError, SchemaError
from .graph import build_graph
from .netlist import load_netlist, write_canonical
from .pna import TrainConfig
from .pna.checkpoint import checkpoint_bytes, load_checkpoint
from .sta import TIMING_MODES, default_library, load_library

log = logging.getLogger("relgraph")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("RELGRAPH_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise RelGraphError(f"RELGRAPH_SEED must be an integer, got {env!r}") from None


def _library(args):
    return load_library(args.library) if args.library else default_library()


def _netlist(path, clock_period=1.0):
    try:
        return load_netlist(path, clock_period=clock_period)
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from exc
    except (NetlistError, SchemaError) as exc:
        # name the file; the message already carries line/column or the field path
        raise RelGraphError(f"{path}: {exc}") from exc


def _write_bytes(path, data: bytes) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from exc


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, seed=seed)


def _progress(epoch, train_mae, val_mae):
    log.info("epoch %d  train MAE %.4f  val MAE %.4f", epoch, train_mae, val_mae)


# --------------------------------------------------------------------------- stages


def cmd_convert(args) -> int:
    netlist = _netlist(args.netlist, args.clock_period)
    pl.write_text(args.out, write_canonical(netlist))
    log.info("%s: %d gates -> %s", netlist.name, len(netlist.gates), args.out)
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    for netlist in pl.synth_designs(args.designs, args.gates, _seed(args), args.depth):
        pl.write_text(out / f"{netlist.name}.json", write_canonical(netlist))
        log.info("%s: %d gates", netlist.name, len(netlist.gates))
    return 0


def _find_paths(graph, lib, count, dff_only):
    paths = pl.find_paths(graph, lib, count, dff_only)
    if len(paths) < count:
        log.warning("%s: only %d eligible endpoints, fewer than the requested %d", graph.netlist.name, len(paths), count)
    return paths


def cmd_paths(args) -> int:
    graph = build_graph(_netlist(args.netlist))
    paths = _find_paths(graph, _library(args), args.count, args.dff_only)
    pl.write_text(args.out, pl.dump_json(pl.paths_document(graph, paths)))
    return 0


def _label(graph, paths, lib, args, seed):
    label_seed = pl.derive_seed(seed, "label", graph.netlist.name)
    return pl.label_records(graph, paths, lib, args.mode, label_seed, args.instances, args.timing, args.threads)


def cmd_label(args) -> int:
    graph = build_graph(_netlist(args.netlist))
    paths = pl.paths_from_document(graph, pl.read_json(args.paths), str(args.paths))
    pl.write_jsonl(args.out, _label(graph, paths, _library(args), args, _seed(args)))
    return 0


def cmd_extract(args) -> int:
    graph = build_graph(_netlist(args.netlist))
    paths = pl.paths_from_document(graph, pl.read_json(args.paths), str(args.paths))
    samples = pl.build_samples(graph, paths, pl.read_jsonl(args.labels), args.hop)
    pl.write_jsonl(args.out, [sample_to_record(s) for s in samples])
    return 0


def _load_all(files):
    samples = []
    for f in files:
        samples.extend(load_samples(f))
    return samples


def cmd_split(args) -> int:
    spec = SplitSpec(args.scenario, _seed(args))
    split = make_split(spec, _load_all(args.samples), args.test_design)
    pl.write_text(args.out, pl.dump_json(split_manifest(spec, split)))
    log.info("train %d, val %d, test %d", *map(len, split))
    return 0


def _train(split, args, seed, out: Path):
    in_features = split.train[0].subgraph.num_features
    result = pl.fit(split, args.target, _train_config(args, seed), in_features, _progress)
    _write_bytes(out / "model.ckpt", checkpoint_bytes(result.model))
    pl.write_jsonl(out / "train_log.jsonl", result.log)
    pl.write_text(out / "report.json", pl.dump_json(result.report))
    return result


def cmd_train(args) -> int:
    split = apply_manifest(pl.read_json(args.split), _load_all(args.samples))
    _train(split, args, _seed(args), Path(args.out))
    return 0


def cmd_predict(args) -> int:
    if not Path(args.model).is_file():
        raise IoError(f"{args.model}: checkpoint not found")
    model = load_checkpoint(args.model)
    samples = _load_all(args.samples)
    if args.split:
        samples = getattr(apply_manifest(pl.read_json(args.split), samples), args.part)
    pl.write_jsonl(args.out, pl.predictions(model, samples))
    return 0


def _truth(files, target):
    truth = {}
    for f in files:
        for i, rec in enumerate(pl.read_jsonl(f)):
            key = (rec.get("design"), rec.get("path_index"))
            value = pl.label_value(rec, f"{f}:{i + 1}")
            if isinstance(value, tuple):
                value = value[TARGETS.index(target)] if target != "aging" else None
            elif target != "aging":
                value = None
            if value is None:
                raise RelGraphError(f"{f}:{i + 1}: record has no {target!r} label")
            truth[key] = value
    return truth


def cmd_eval(args) -> int:
    metrics = pl.evaluate(pl.read_jsonl(args.predictions), _truth(args.labels, args.target))
    text = pl.dump_json(metrics)
    if args.out:
        pl.write_text(args.out, text)
    sys.stdout.write(text)
    return 0


def cmd_all(args) -> int:
    seed = _seed(args)
    out = Path(args.out)
    lib = _library(args)
    if args.netlist:
        netlists = [_netlist(p) for p in args.netlist]
    else:
        netlists = pl.synth_designs(args.designs, args.gates, seed, args.depth)
    names = [n.name for n in netlists]
    if len(set(names)) != len(names):
        raise RelGraphError(f"design names must be distinct, got {names}")
    target = "aging" if args.mode == "aging" else args.target
    test_design = args.test_design or names[-1]
    if test_design not in names:
        raise RelGraphError(f"test design {test_design!r} not among {names}")
    if args.scenario != "self_referencing" and len(names) < 2:
        raise RelGraphError(f"the {args.scenario} scenario needs at least two designs")
    if args.scenario == "self_referencing":
        used = [test_design]
    elif args.scenario == "single_design":
        # train on the first other design
        used = [next(n for n in names if n != test_design), test_design]
    else:
        used = names

    samples = []
    for netlist in netlists:
        name = netlist.name
        pl.write_text(out / "netlists" / f"{name}.json", write_canonical(netlist))
        graph = build_graph(netlist)
        paths = _find_paths(graph, lib, args.count, args.dff_only)
        pl.write_text(out / "paths" / f"{name}.json", pl.dump_json(pl.paths_document(graph, paths)))
        labels = _label(graph, paths, lib, args, seed)
        pl.write_jsonl(out / "labels" / f"{name}.jsonl", labels)
        design_samples = pl.build_samples(graph, paths, labels, args.hop)
        pl.write_jsonl(out / "samples" / f"{name}.jsonl", [sample_to_record(s) for s in design_samples])
        if name in used:
            samples.extend(design_samples)
        log.info("%s: %d paths labeled", name, len(paths))

    spec = SplitSpec(args.scenario, seed)
    split = make_split(spec, samples, test_design)
    pl.write_text(out / "split.json", pl.dump_json(split_manifest(spec, split)))
    args.target = target
    result = _train(split, args, seed, out)
    preds = pl.predictions(result.model, split.test)
    pl.write_jsonl(out / "predictions.jsonl", preds)
    truth = {s.key: s.target(target) for s in split.test}
    metrics = pl.evaluate(preds, truth)
    metrics["baseline_mae"] = pl.baseline_mae(split, target)
    metrics.update(scenario=args.scenario, test_design=test_design, hop=args.hop, target=target)
    pl.write_text(out / "metrics.json", pl.dump_json(metrics))
    sys.stdout.write(pl.dump_json(metrics))
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relgraph", description="Path delay-degradation prediction toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        return p

    def seed(p):
        p.add_argument("--seed", type=int, default=None, help="run seed (falls back to $RELGRAPH_SEED, then 0)")

    def library(p):
        p.add_argument("--library", help="delay library JSON (default: bundled synthetic library)")

    def labeling(p):
        p.add_argument("--mode", choices=("variation", "aging"), default="variation")
        p.add_argument("--instances", type=int, default=100, help="Monte-Carlo variation instances")
        p.add_argument("--timing", choices=TIMING_MODES, default="endpoint", help="how a variant path is timed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")

    def training(p):
        p.add_argument("--target", choices=TARGETS, default="mu")
        p.add_argument("--epochs", type=int, default=500)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--batch-size", type=int, default=32)

    def positive(p, flag, default, help):
        p.add_argument(flag, type=int, default=default, help=help)

    p = add("convert", cmd_convert, "structural netlist -> canonical JSON")
    p.add_argument("--netlist", required=True)
    p.add_argument("--clock-period", type=float, default=1.0, help="clock period in ns for structural input")
    p.add_argument("--out", required=True)

    p = add("synth", cmd_synth, "generate synthetic benchmark netlists")
    positive(p, "--designs", 5, "number of designs")
    positive(p, "--gates", 2000, "instances per design")
    positive(p, "--depth", 16, "logic depth")
    seed(p)
    p.add_argument("--out", required=True, help="output directory")

    p = add("paths", cmd_paths, "extract worst-slack timing paths")
    p.add_argument("--netlist", required=True)
    library(p)
    positive(p, "--count", 1000, "number of endpoints")
    p.add_argument("--dff-only", action="store_true", help="only flip-flop endpoints")
    p.add_argument("--out", required=True)

    p = add("label", cmd_label, "label paths with delay degradation")
    p.add_argument("--netlist", required=True)
    library(p)
    p.add_argument("--paths", required=True)
    labeling(p)
    seed(p)
    p.add_argument("--out", required=True)

    p = add("extract", cmd_extract, "enclosing subgraphs of labeled paths")
    p.add_argument("--netlist", required=True)
    p.add_argument("--paths", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--hop", type=int, default=1)
    p.add_argument("--out", required=True)

    p = add("split", cmd_split, "split samples into train/val/test")
    p.add_argument("--samples", nargs="+", required=True)
    p.add_argument("--scenario", choices=SCENARIOS, default="self_referencing")
    p.add_argument("--test-design", help="target design for the cross-design scenarios")
    seed(p)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train the PNA regressor")
    p.add_argument("--samples", nargs="+", required=True)
    p.add_argument("--split", required=True, help="split manifest")
    training(p)
    seed(p)
    p.add_argument("--out", required=True, help="output directory")

    p = add("predict", cmd_predict, "predict with a trained checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", nargs="+", required=True)
    p.add_argument("--split", help="restrict to one part of a split manifest")
    p.add_argument("--part", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "MAE and MAPE of predictions")
    p.add_argument("--predictions", required=True)
    p.add_argument("--labels", nargs="+", required=True, help="label or sample files")
    p.add_argument("--target", choices=TARGETS, default="mu")
    p.add_argument("--out")

    p = add("all", cmd_all, "run every stage end to end")
    p.add_argument("--netlist", nargs="+", help="designs to use (default: synthesize)")
    positive(p, "--designs", 5, "synthetic designs when --netlist is absent")
    positive(p, "--gates", 2000, "instances per synthetic design")
    positive(p, "--depth", 16, "logic depth of synthetic designs")
    library(p)
    positive(p, "--count", 1000, "paths per design")
    p.add_argument("--dff-only", action="store_true")
    p.add_argument("--hop", type=int, default=1)
    labeling(p)
    p.add_argument("--scenario", choices=SCENARIOS, default="self_referencing")
    p.add_argument("--test-design", help="target design (default: the last one)")
    training(p)
    seed(p)
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _check(args):
    for flag in ("hop",):
        if getattr(args, flag, 0) < 0:
            raise RelGraphError(f"--{flag} must be >= 0")
    for flag in ("count", "instances", "epochs", "batch_size", "designs", "gates", "depth", "threads"):
        if getattr(args, flag, 1) < 1:
            raise RelGraphError(f"--{flag.replace('_', '-')} must be >= 1")
    if getattr(args, "instances", 2) < 2:
        raise RelGraphError("--instances must be >= 2")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        _check(args)
        return args.func(args)
    except (RelGraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
