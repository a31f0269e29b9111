"""Sweep a global aging scale over synthetic benchmarks and report the path-degradation range.

The bundled library's aging_rel column was chosen so that scale 1.0 lands inside the
15%-26% band of end-of-life path degradation; this script regenerates the evidence.

    python scripts/calibrate_aging.py --designs 5 --gates 2000 --count 1000
"""

from __future__ import annotations

import argparse

import numpy as np

from relgraph.graph import build_graph
from relgraph.pipeline import derive_seed, find_paths
from relgraph.sta import AgingParams, default_library, label_paths_aging, load_library
from relgraph.synth import SynthConfig, generate_synthetic_netlist

BAND = (15.0, 26.0)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--library", help="library JSON (default: bundled)")
    parser.add_argument("--designs", type=int, default=5)
    parser.add_argument("--gates", type=int, default=2000)
    parser.add_argument("--count", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--scales", type=float, nargs="+", default=[0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2])
    args = parser.parse_args(argv)

    lib = load_library(args.library) if args.library else default_library()
    designs = []
    for i in range(args.designs):
        nl = generate_synthetic_netlist(SynthConfig(args.gates, seed=derive_seed(args.seed, "synth", i), name=f"syn{i}"))
        graph = build_graph(nl)
        designs.append((graph, find_paths(graph, lib, args.count)))

    print("| global scale | min % | max % | mean % | inside band |")
    print("|---|---|---|---|---|")
    for scale in args.scales:
        deg = np.concatenate(
            [label_paths_aging(g, paths, lib, AgingParams(global_scale=scale)) for g, paths in designs]
        )
        inside = BAND[0] <= deg.min() and deg.max() <= BAND[1]
        print(f"| {scale:.2f} | {deg.min():.2f} | {deg.max():.2f} | {deg.mean():.2f} | {'yes' if inside else 'no'} |")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
