"""Labeled path samples, the three training scenarios, and their file formats."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import IoError, SchemaError, TooFewSamples, UnknownDesign
from .graph import PathSubgraph, subgraph_from_record, subgraph_to_record

SCENARIOS = ("self_referencing", "single_design", "design_dataset")
TARGETS = ("mu", "sigma", "max", "aging")
SPLIT_STREAM = 0x5917


@dataclass(frozen=True, eq=False)
class LabeledSample:
    subgraph: PathSubgraph
    label: float | tuple[float, float, float]  # aging % or (mu, sigma, max) %
    design: str
    path_index: int

    def __post_init__(self):
        lab = self.label
        if isinstance(lab, (tuple, list, np.ndarray)):
            lab = tuple(float(x) for x in lab)
            if len(lab) != 3:
                raise ValueError("a variation label is (mu, sigma, max)")
        else:
            lab = float(lab)
        if not np.all(np.isfinite(lab)):
            raise ValueError(f"{self.design}[{self.path_index}]: label must be finite")
        object.__setattr__(self, "label", lab)

    @property
    def key(self) -> tuple[str, int]:
        return (self.design, self.path_index)

    def target(self, stat: str) -> float:
        """Scalar regression target: one of mu, sigma, max (variation) or aging."""
        if stat not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")
        if isinstance(self.label, tuple):
            if stat == "aging":
                raise ValueError("sample carries a variation label, not an aging label")
            return self.label[TARGETS.index(stat)]
        if stat != "aging":
            raise ValueError("sample carries an aging label")
        return self.label

    def __eq__(self, other):
        if not isinstance(other, LabeledSample):
            return NotImplemented
        return self.key == other.key and self.label == other.label and self.subgraph == other.subgraph


@dataclass(frozen=True)
class SplitSpec:
    scenario: str
    seed: int = 0
    ratios: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        expected = (0.81, 0.10, 0.09) if self.scenario == "self_referencing" else (0.9, 0.1)
        ratios = expected if self.ratios is None else tuple(self.ratios)
        if len(ratios) != len(expected) or not math.isclose(sum(ratios), 1.0):
            raise ValueError(f"{self.scenario} needs {len(expected)} ratios summing to 1")
        object.__setattr__(self, "ratios", ratios)


class Split(NamedTuple):
    train: list[LabeledSample]
    val: list[LabeledSample]
    test: list[LabeledSample]


def _sorted(samples: Iterable[LabeledSample]) -> list[LabeledSample]:
    return sorted(samples, key=lambda s: s.key)


def _shuffled(samples: Iterable[LabeledSample], seed: int) -> list[LabeledSample]:
    ordered = _sorted(samples)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(SPLIT_STREAM,))))
    return [ordered[i] for i in rng.permutation(len(ordered))]


def _cut(n: int, ratios: Sequence[float]) -> list[int]:
    """Floor at each cumulative boundary; the remainder goes to the last part."""
    bounds, acc = [], 0.0
    for r in ratios[:-1]:
        acc += r
        bounds.append(int(math.floor(round(acc * n, 9))))
    return bounds


def split_self_referencing(samples: Sequence[LabeledSample], seed: int = 0, ratios=(0.81, 0.10, 0.09)) -> Split:
    if len(samples) < 10:
        raise TooFewSamples(f"self-referencing split needs >= 10 samples, got {len(samples)}")
    pool = _shuffled(samples, seed)
    a, b = _cut(len(pool), ratios)
    return Split(pool[:a], pool[a:b], pool[b:])


def _train_val(pool: Sequence[LabeledSample], seed: int, ratios) -> tuple[list, list]:
    if len(pool) < 2:
        raise TooFewSamples(f"a train/validation split needs >= 2 samples, got {len(pool)}")
    pool = _shuffled(pool, seed)
    (a,) = _cut(len(pool), ratios)
    return pool[:a], pool[a:]


def split_single_design(
    train_design_samples: Sequence[LabeledSample],
    test_design_samples: Sequence[LabeledSample],
    seed: int = 0,
    ratios=(0.9, 0.1),
) -> Split:
    if not test_design_samples:
        raise TooFewSamples("the test design has no samples")
    train, val = _train_val(train_design_samples, seed, ratios)
    return Split(train, val, _sorted(test_design_samples))


def group_by_design(samples: Iterable[LabeledSample]) -> dict[str, list[LabeledSample]]:
    groups: dict[str, list[LabeledSample]] = {}
    for s in samples:
        groups.setdefault(s.design, []).append(s)
    return {d: groups[d] for d in sorted(groups)}


def split_design_dataset(
    samples: Mapping[str, Sequence[LabeledSample]] | Sequence[LabeledSample],
    held_out_design: str,
    seed: int = 0,
    ratios=(0.9, 0.1),
) -> Split:
    groups = dict(samples) if isinstance(samples, Mapping) else group_by_design(samples)
    if held_out_design not in groups:
        raise UnknownDesign(f"design {held_out_design!r} not among {sorted(groups)}")
    if len(groups) < 2:
        raise TooFewSamples("the design-dataset scenario needs at least two designs")
    pool = [s for d, group in groups.items() if d != held_out_design for s in group]
    train, val = _train_val(pool, seed, ratios)
    return Split(train, val, _sorted(groups[held_out_design]))


def make_split(spec: SplitSpec, samples: Sequence[LabeledSample], test_design: str | None = None) -> Split:
    """Dispatch on the scenario. ``test_design`` names the target design for the two
    cross-design scenarios; the self-referencing scenario uses all given samples."""
    if spec.scenario == "self_referencing":
        return split_self_referencing(samples, spec.seed, spec.ratios)
    groups = group_by_design(samples)
    if test_design is None or test_design not in groups:
        raise UnknownDesign(f"test design {test_design!r} not among {sorted(groups)}")
    if spec.scenario == "design_dataset":
        return split_design_dataset(groups, test_design, spec.seed, spec.ratios)
    others = [d for d in groups if d != test_design]
    if len(others) != 1:
        raise TooFewSamples(f"single-design scenario needs exactly one training design, got {others}")
    return split_single_design(groups[others[0]], groups[test_design], spec.seed, spec.ratios)


# --------------------------------------------------------------------------- files


def sample_to_record(sample: LabeledSample) -> dict:
    rec = subgraph_to_record(sample.subgraph, sample.design, sample.path_index)
    rec["label"] = list(sample.label) if isinstance(sample.label, tuple) else sample.label
    return rec


def sample_from_record(rec: dict, where: str = "$") -> LabeledSample:
    if not isinstance(rec, dict):
        raise SchemaError(where, "expected object")
    # the label is validated here and kept on the sample, not on the subgraph
    sub, design, path_index = subgraph_from_record({k: v for k, v in rec.items() if k != "label"}, where)
    if "label" not in rec:
        raise SchemaError(f"{where}.label", "missing")
    label = rec["label"]
    ok = isinstance(label, (int, float)) and not isinstance(label, bool)
    if isinstance(label, list):
        ok = len(label) == 3 and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in label)
    if not ok:
        raise SchemaError(f"{where}.label", "expected a number or [mu, sigma, max]")
    try:
        return LabeledSample(sub, label, design, path_index)
    except ValueError as exc:
        raise SchemaError(f"{where}.label", str(exc)) from None


def save_samples(path, samples: Iterable[LabeledSample]) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for s in samples:
                fh.write(json.dumps(sample_to_record(s)) + "\n")
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from exc


def _read_lines(path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from exc


def load_samples(path) -> list[LabeledSample]:
    out = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(where, f"invalid JSON ({exc.msg})") from None
        out.append(sample_from_record(rec, where))
    return out


def split_manifest(spec: SplitSpec, split: Split) -> dict:
    def members(part):
        return [[s.design, s.path_index] for s in part]

    return {
        "scenario": spec.scenario,
        "seed": spec.seed,
        "ratios": list(spec.ratios),
        "train": members(split.train),
        "val": members(split.val),
        "test": members(split.test),
    }


def apply_manifest(manifest: dict, samples: Sequence[LabeledSample]) -> Split:
    """Rebuild a split from a manifest's member lists."""
    index = {s.key: s for s in samples}
    parts = []
    for name in ("train", "val", "test"):
        members = manifest.get(name)
        if not isinstance(members, list):
            raise SchemaError(f"$.{name}", "expected a member list")
        part = []
        for i, m in enumerate(members):
            key = tuple(m) if isinstance(m, list) and len(m) == 2 else None
            if key not in index:
                raise SchemaError(f"$.{name}[{i}]", f"unknown sample {m!r}")
            part.append(index[key])
        parts.append(part)
    return Split(*parts)
