#!/usr/bin/env python3
"""Message volume against swarm size.

Prints mean AM per strategy for each node count and the growth factor
between consecutive sizes. Flooding should grow much faster than the walk
based strategies.
"""

import argparse
import statistics

from swarm_offload.engine import STRATEGIES, ScenarioConfig, run


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="AM growth with node count")
    ap.add_argument("--nodes", nargs="+", type=int, default=[10, 25, 50])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--duration", type=float, default=900.0)
    ap.add_argument("--env", default="static")
    args = ap.parse_args(argv)

    means = {}
    for s in STRATEGIES:
        for n in args.nodes:
            ams = [run(ScenarioConfig(strategy=s, node_count=n, seed=k, environment=args.env,
                                      duration_s=args.duration)).summary.AM
                   for k in range(1, args.seeds + 1)]
            means[s, n] = statistics.mean(ams)

    print(f"{'strategy':<9}" + "".join(f"{n:>10}" for n in args.nodes) + "   growth")
    for s in STRATEGIES:
        cells = "".join(f"{means[s, n]:>10.0f}" for n in args.nodes)
        growth = " ".join(f"{means[s, b] / means[s, a]:.2f}x"
                          for a, b in zip(args.nodes, args.nodes[1:]) if means[s, a])
        print(f"{s:<9}{cells}   {growth}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
