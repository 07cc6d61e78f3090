#!/usr/bin/env python3
"""Run the strategy comparison sweep and print the summary table.

    python scripts/reproduce_table.py --env static --nodes 10 25 50 --jobs 4

Everything lands under --out (summary.csv, table.txt, per-run artifacts).
"""

import argparse
import sys
import time
from pathlib import Path

from swarm_offload.cli import RunMatrix, write_outputs, render_table, run_cells
from swarm_offload.engine import ENVIRONMENTS, STRATEGIES


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--env", nargs="+", choices=ENVIRONMENTS, default=["static"])
    ap.add_argument("--nodes", nargs="+", type=int, default=[10, 25, 50, 100])
    ap.add_argument("--queue", nargs="+", default=["table"],
                    help="queue capacities, or 'table' for per-device limits")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--duration", type=float, default=900.0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("out/table"))
    args = ap.parse_args(argv)

    queues = [None if q == "table" else int(q) for q in args.queue]
    matrix = RunMatrix(STRATEGIES, args.nodes, queues, args.env,
                       range(1, args.seeds + 1), {"duration_s": args.duration})
    print(f"{len(matrix)} runs", file=sys.stderr)
    t0 = time.perf_counter()
    rows = write_outputs(run_cells(matrix.cells(), args.jobs), args.out)
    print(render_table(rows), end="")
    print(f"done in {time.perf_counter() - t0:.1f} s, results in {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
