import numpy as np
import pytest
from scipy import stats

from circuits import ANNOTATED_PATHS, annotated_chain, enclosing_example, enumerate_arrivals, instance_for_delays, random_netlist
from relgraph.errors import NonpositiveBaseline, SchemaError
from relgraph.graph import build_graph, extract_timing_paths
from relgraph.netlist import make_netlist
from relgraph.sta import (
    AgingParams,
    CellDelay,
    DelayLibrary,
    VariationInstance,
    apply_aging,
    compute_arrivals,
    compute_slacks,
    critical_endpoint,
    default_library,
    degradation_percent,
    gate_delay,
    label_aging,
    label_paths_aging,
    label_paths_variation,
    load_library,
    nominal_node_delays,
    path_delay,
    summarize,
    variation_degradations,
    variation_multipliers,
)
from relgraph.synth import SynthConfig, generate_synthetic_netlist

LIB = default_library()


def test_gate_delay_formula():
    nl = make_netlist("m", ["a"], [], [("g", "NAND2", ["a", "a"], "y")])
    c = LIB["NAND2"]
    assert gate_delay(nl.gates[0], 3, LIB) == pytest.approx(c.d0 + 3 * c.k_load)
    assert gate_delay(nl.gates[0], 0, LIB, 1.1) == pytest.approx(1.1 * c.d0)


def test_nominal_delays_by_role():
    graph, _ = enclosing_example()
    D = nominal_node_delays(graph, LIB)
    node = graph.gate_node
    assert D[:4].tolist() == [0, 0, 0, 0]
    assert D[node["DFF1"]] == LIB["DFF"].clk_to_q
    assert D[node["G4"]] == pytest.approx(LIB["NAND2"].d0 + 2 * LIB["NAND2"].k_load)
    assert D[node["G5"]] == pytest.approx(LIB["INV"].d0)


@pytest.mark.parametrize("name", sorted(ANNOTATED_PATHS))
def test_annotated_path_totals(name):
    delays, kinds, total = ANNOTATED_PATHS[name]
    graph, path = annotated_chain(kinds)
    inst = instance_for_delays(graph, path, delays)
    assert path_delay(graph, path, LIB, inst) == pytest.approx(total, abs=0.2)


def test_arrivals_match_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(10):
        graph = build_graph(random_netlist(rng, int(rng.integers(3, 30)), window=6))
        inst = VariationInstance(variation_multipliers(graph.netlist, LIB, seed=int(rng.integers(1000))), 0)
        A = compute_arrivals(graph, LIB, inst)
        D = nominal_node_delays(graph, LIB)
        D[-len(graph.netlist.gates):] *= inst.multipliers
        want = enumerate_arrivals(graph, D)
        assert np.array_equal(A, want)


def test_slacks():
    graph, _ = enclosing_example()
    A = compute_arrivals(graph, LIB)
    slacks = compute_slacks(graph, LIB, 100.0)
    for e, s in slacks.items():
        assert s == pytest.approx(100.0 - max(A[u] for u in graph.fanin[e]))
    # DFF1 is fed by a PI directly (arrival 0)
    assert slacks[graph.gate_node["DFF1"]] == 100.0


def test_variation_sampler_statistics():
    nl = make_netlist("wide", ["a"], [], [(f"g{i}", "NAND2", ["a", "a"], f"y{i}") for i in range(20000)])
    m = variation_multipliers(nl, LIB, seed=5)
    sigma = LIB["NAND2"].sigma_rel
    z = (m - 1) / sigma
    assert abs(z.mean()) < 0.03
    # a normal truncated at +-3 sigma has standard deviation 0.9866
    trunc_sd = stats.truncnorm(-3, 3).std()
    assert z.std() == pytest.approx(trunc_sd, rel=0.05)
    assert np.abs(z).max() <= 3.0
    # indexed draws: same seed and index repeat, different index differs
    assert np.array_equal(m, variation_multipliers(nl, LIB, seed=5))
    assert not np.array_equal(m, variation_multipliers(nl, LIB, seed=5, index=1))


def test_zero_sigma_gives_unit_multipliers():
    nl = generate_synthetic_netlist(SynthConfig(200, seed=1))
    flat = LIB.replace(sigma_rel=0.0)
    assert np.all(variation_multipliers(nl, flat, seed=9) == 1.0)
    graph = build_graph(nl)
    paths = extract_timing_paths(graph, compute_arrivals(graph, flat), 20)
    for lab in label_paths_variation(graph, paths, flat, 10, seed=3):
        assert lab.as_tuple() == (0.0, 0.0, 0.0)


def test_summarize_matches_two_pass():
    rng = np.random.default_rng(0)
    x = rng.normal(2.0, 0.5, size=100)
    lab = summarize(x)
    assert lab.mu == pytest.approx(np.mean(x), abs=1e-12)
    assert lab.sigma == pytest.approx(np.std(x, ddof=1), abs=1e-12)
    assert lab.max == x.max()
    with pytest.raises(ValueError):
        summarize([1.0])


def test_degradation_percent():
    assert degradation_percent(80.0, 84.0) == pytest.approx(5.0)
    with pytest.raises(NonpositiveBaseline):
        degradation_percent(0.0, 1.0)


def test_uniform_aging_scales_every_path():
    graph, path = annotated_chain(["INV", "NAND2", "NOR2"])
    lib = LIB.replace(aging_rel=0.2)
    # the launch flop ages too, so the whole path slows by 20%
    assert label_aging(graph, path, lib, timing="path") == pytest.approx(20.0)
    assert label_aging(graph, path, lib) == pytest.approx(20.0)
    no_ff = LIB.replace(aging_rel=0.2, clk_to_q=0.0)
    assert label_aging(graph, path, no_ff) == pytest.approx(20.0)


def test_random_stress_is_seeded():
    nl = generate_synthetic_netlist(SynthConfig(300, seed=2))
    p = AgingParams("random")
    a = apply_aging(nl, LIB, p, 4).multipliers
    assert np.array_equal(a, apply_aging(nl, LIB, p, 4).multipliers)
    assert not np.array_equal(a, apply_aging(nl, LIB, p, 5).multipliers)
    worst = apply_aging(nl, LIB, AgingParams(), 4).multipliers
    assert np.all(a >= 1.0) and np.all(a <= worst)
    assert np.all(apply_aging(nl, LIB, AgingParams(global_scale=0.0), 4).multipliers == 1.0)


def test_default_aging_range():
    lows, highs = [], []
    for seed in range(3):
        graph = build_graph(generate_synthetic_netlist(SynthConfig(1000, seed=seed)))
        paths = extract_timing_paths(graph, compute_arrivals(graph, LIB), 300)
        deg = label_paths_aging(graph, paths, LIB)
        lows.append(deg.min())
        highs.append(deg.max())
    assert min(lows) >= 15.0 and max(highs) <= 26.0


def test_endpoint_timing_at_least_fixed_path():
    graph = build_graph(generate_synthetic_netlist(SynthConfig(400, seed=7)))
    paths = extract_timing_paths(graph, compute_arrivals(graph, LIB), 50)
    ep = variation_degradations(graph, paths, LIB, 20, seed=1)
    fixed = variation_degradations(graph, paths, LIB, 20, seed=1, timing="path")
    assert np.all(ep >= fixed - 1e-9)
    assert np.any(ep > fixed + 1e-6)


def test_labels_independent_of_threads():
    graph = build_graph(generate_synthetic_netlist(SynthConfig(400, seed=8)))
    paths = extract_timing_paths(graph, compute_arrivals(graph, LIB), 30)
    one = label_paths_variation(graph, paths, LIB, 60, seed=2, threads=1)
    four = label_paths_variation(graph, paths, LIB, 60, seed=2, threads=4)
    assert one == four
    assert all(lab.mu <= lab.max for lab in one)


def test_critical_endpoint_ties_to_smaller_id():
    nl = make_netlist("two", ["a"], ["y1", "y2"], [("g1", "INV", ["a"], "y1"), ("g2", "INV", ["a"], "y2")])
    graph = build_graph(nl)
    assert critical_endpoint(graph, compute_arrivals(graph, LIB)) == 1


def test_library_json(tmp_path):
    text = LIB.to_json()
    assert DelayLibrary.from_json(text) == LIB
    f = tmp_path / "lib.json"
    f.write_text(text)
    assert load_library(f) == LIB
    with pytest.raises(SchemaError) as info:
        DelayLibrary.from_json('{"cells": {"INV": {"d0_ps": 1.0}}}')
    assert info.value.path == "$.cells.INV.k_load_ps"
    with pytest.raises(SchemaError):
        DelayLibrary.from_json('{"cells": {"INV": {"d0_ps": 1, "k_load_ps": 0, "sigma_rel": 0.5, "aging_rel": 0}}}')
    with pytest.raises(ValueError):
        CellDelay(0.0, 0.0, 0.1, 0.0)
