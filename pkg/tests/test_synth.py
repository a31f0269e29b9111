import pytest

from relgraph.graph import build_graph
from relgraph.netlist import parse_canonical, write_canonical
from relgraph.synth import SynthConfig, generate_synthetic_netlist


def test_counts_and_validity():
    nl = generate_synthetic_netlist(SynthConfig(2000, depth=16, seed=3))
    assert len(nl.gates) == 2000
    n_ff = sum(g.kind.is_sequential for g in nl.gates)
    assert n_ff == 400
    assert nl.clock_period == pytest.approx(0.32)
    # round-trips and builds, so it is a legal netlist
    assert parse_canonical(write_canonical(nl)) == nl
    graph = build_graph(nl)
    assert len(graph.topo_order) == graph.n


def test_every_combinational_output_is_observed():
    nl = generate_synthetic_netlist(SynthConfig(500, seed=4))
    read = {net for g in nl.gates for net in g.input_nets} | set(nl.primary_outputs)
    assert all(g.output_net in read for g in nl.gates if not g.kind.is_sequential)


def test_seeded():
    a = generate_synthetic_netlist(SynthConfig(300, seed=1))
    assert a == generate_synthetic_netlist(SynthConfig(300, seed=1))
    assert a != generate_synthetic_netlist(SynthConfig(300, seed=2))


def test_tiny_designs():
    for n in (1, 2, 5):
        nl = generate_synthetic_netlist(SynthConfig(n, depth=4, seed=0))
        assert len(nl.gates) == n
    with pytest.raises(ValueError):
        SynthConfig(0)
