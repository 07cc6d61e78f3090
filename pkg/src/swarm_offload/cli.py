"""Command-line front end: single runs, experiment matrices and config checks."""

from __future__ import annotations

import argparse
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from .core import catalog
from .engine import (
    ENVIRONMENTS,
    STRATEGIES,
    ConfigError,
    RunResult,
    ScenarioConfig,
    parse_config_text,
    run,
)
from .metrics import METRICS, export_timeseries, summary_row, write_summary_csv

TABLE_QUEUE = "table"
LD_TARGET_FRACTION = 0.75
LOWER_IS_BETTER = frozenset({"ST", "HPH", "AM", "MPR"})
HIGHER_IS_BETTER = frozenset({"HMR", "GR"})


def queue_label(capacity: Optional[int]) -> str:
    return TABLE_QUEUE if capacity is None else str(capacity)


def _queue_arg(text: str) -> Optional[int]:
    if text == TABLE_QUEUE:
        return None
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer or '{TABLE_QUEUE}'") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("queue capacity must be positive")
    return value


@dataclass
class RunMatrix:
    """Cross product of scenario axes; every cell is an independent run."""

    strategies: Sequence[str] = STRATEGIES
    node_counts: Sequence[int] = (10, 25, 50, 100)
    queues: Sequence[Optional[int]] = (5, 10, 15)
    environments: Sequence[str] = ENVIRONMENTS
    seeds: Sequence[int] = (1, 2, 3, 4, 5)
    base: dict[str, Any] = field(default_factory=dict)

    def cells(self) -> list[ScenarioConfig]:
        out = []
        for s, n, q, e, seed in itertools.product(self.strategies, self.node_counts, self.queues,
                                                  self.environments, self.seeds):
            data = dict(self.base)
            data.update(strategy=s, node_count=n, queue_capacity=q, environment=e, seed=seed)
            out.append(ScenarioConfig.from_mapping(data))
        return sorted(out, key=cell_key)

    def __len__(self) -> int:
        return (len(self.strategies) * len(self.node_counts) * len(self.queues)
                * len(self.environments) * len(self.seeds))


def cell_key(cfg: ScenarioConfig) -> tuple:
    q = -1 if cfg.queue_capacity is None else cfg.queue_capacity
    return (STRATEGIES.index(cfg.strategy), cfg.node_count, q,
            ENVIRONMENTS.index(cfg.environment), cfg.seed)


def result_row(result: RunResult) -> dict[str, Any]:
    c = result.config
    return summary_row(result.summary, strategy=c.strategy, nodes=c.node_count,
                       queue=queue_label(c.queue_capacity), env=c.environment, seed=c.seed)


def write_artifacts(result: RunResult, out: Path) -> dict[str, Any]:
    """Manifest, time series and the optional logs/dumps for one run."""
    cfg = result.config
    cell = cfg.cell_name()
    manifest = {
        "cell": cell,
        "config": cfg.to_dict(),
        "summary": result.summary.as_dict(),
        "conservation": result.conservation,
        "counters": result.counters,
        "ledger_sha256": result.ledger.digest(),
    }
    mdir = out / "manifest"
    mdir.mkdir(parents=True, exist_ok=True)
    (mdir / f"{cell}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    export_timeseries(result.ledger, cfg.bucket_s, out / "timeseries", cell)
    if cfg.log_messages:
        log = out / "messages" / f"{cell}.log"
        log.parent.mkdir(parents=True, exist_ok=True)
        log.write_text("".join(line + "\n" for line in result.message_log))
    if result.pheromones:
        pdir = out / "pheromones" / cell
        pdir.mkdir(parents=True, exist_ok=True)
        for node, text in result.pheromones.items():
            (pdir / f"{node}.csv").write_text(text)
    tdir = out / "topology" / cell
    tdir.mkdir(parents=True, exist_ok=True)
    for t_s, text in result.topology_snapshots:
        (tdir / f"t{int(round(t_s)):06d}.edges").write_text(text)
    (tdir / "final.edges").write_text("".join(f"{a} {b}\n" for a, b in result.final_edges))
    return manifest


def _run_cell(cfg: ScenarioConfig) -> RunResult:
    return run(cfg)


def run_cells(configs: Sequence[ScenarioConfig], jobs: int = 1) -> list[RunResult]:
    configs = sorted(configs, key=cell_key)
    if jobs <= 1 or len(configs) <= 1:
        return [_run_cell(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_cell, configs))


# --- table rendering ------------------------------------------------------------

def _table_queue_mean() -> float:
    limits = [s.queue_limit for s in catalog()]
    return sum(limits) / len(limits)


def ld_target(queue: Any) -> float:
    if queue in (None, TABLE_QUEUE):
        return LD_TARGET_FRACTION * _table_queue_mean()
    return LD_TARGET_FRACTION * float(queue)


def _mean(values: list) -> Optional[float]:
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return sum(vals) / len(vals) if vals else None


def aggregate(rows: Sequence[dict[str, Any]]) -> list[dict[str, Any]]:
    """Mean of each metric over seeds, one row per (env, queue, strategy, nodes)."""
    groups: dict[tuple, list] = {}
    for r in rows:
        key = (r["env"], str(r["queue"]), r["strategy"], int(r["nodes"]))
        groups.setdefault(key, []).append(r)

    def order(key):
        env, queue, strat, nodes = key
        s = STRATEGIES.index(strat) if strat in STRATEGIES else len(STRATEGIES)
        e = ENVIRONMENTS.index(env) if env in ENVIRONMENTS else len(ENVIRONMENTS)
        return (e, queue != TABLE_QUEUE, int(queue) if queue.isdigit() else 0, s, strat, nodes)

    out = []
    for key in sorted(groups, key=order):
        env, queue, strat, nodes = key
        members = groups[key]
        agg = {"env": env, "queue": queue, "strategy": strat, "nodes": nodes, "seeds": len(members)}
        for m in METRICS:
            agg[m] = _mean([r[m] for r in members])
        out.append(agg)
    return out


def best_marks(agg: Sequence[dict[str, Any]]) -> set[tuple[int, str]]:
    """``(row index, metric)`` pairs holding the best value of their block."""
    blocks: dict[tuple, list[int]] = {}
    for i, r in enumerate(agg):
        blocks.setdefault((r["env"], r["queue"], r["nodes"]), []).append(i)
    marks = set()
    for (env, queue, nodes), idx in blocks.items():
        for m in METRICS:
            scored = [(i, agg[i][m]) for i in idx if agg[i][m] is not None]
            if not scored:
                continue
            if m == "LD":
                target = ld_target(queue)
                key = lambda iv: abs(iv[1] - target)
            elif m in LOWER_IS_BETTER:
                key = lambda iv: iv[1]
            else:
                key = lambda iv: -iv[1]
            best = min(key(iv) for iv in scored)
            for iv in scored:
                if math.isclose(key(iv), best, rel_tol=1e-12, abs_tol=1e-12):
                    marks.add((iv[0], m))
    return marks


def _cell(value: Optional[float], metric: str) -> str:
    if value is None:
        return "NA"
    if metric == "AM":
        return f"{value:.0f}"
    return f"{value:.2f}"


def render_table(rows: Sequence[dict[str, Any]]) -> str:
    """Aligned text table of seed-averaged metrics; ``*`` marks the best value
    per metric and node count."""
    if not rows:
        raise ValueError("render_table needs at least one row")
    agg = aggregate(rows)
    marks = best_marks(agg)
    header = ["Strategy", "#Nodes", *METRICS]
    sections: dict[tuple, list[list[str]]] = {}
    for i, r in enumerate(agg):
        cells = [r["strategy"], str(r["nodes"])]
        for m in METRICS:
            text = _cell(r[m], m)
            cells.append(text + ("*" if (i, m) in marks else " "))
        sections.setdefault((r["env"], r["queue"]), []).append(cells)

    lines: list[str] = []
    for (env, queue), body in sections.items():
        widths = [max(len(h), *(len(row[k]) for row in body)) for k, h in enumerate(header)]
        if lines:
            lines.append("")
        lines.append(f"{env} environment, queue {queue}")
        lines.append("  ".join(h.ljust(w) if k < 2 else h.rjust(w) for k, (h, w) in
                               enumerate(zip(header, widths))).rstrip())
        lines.append("  ".join("-" * w for w in widths))
        prev = None
        for row in body:
            shown = list(row)
            if shown[0] == prev:
                shown[0] = ""
            else:
                prev = row[0]
            lines.append("  ".join(c.ljust(w) if k < 2 else c.rjust(w) for k, (c, w) in
                                   enumerate(zip(shown, widths))).rstrip())
    return "\n".join(lines) + "\n"


# --- argument handling ------------------------------------------------------------

def _add_scenario_flags(p: argparse.ArgumentParser, single: bool) -> None:
    p.add_argument("--config", type=Path, help="key = value or JSON scenario file")
    if single:
        p.add_argument("--strategy", choices=STRATEGIES)
        p.add_argument("--nodes", type=int)
        p.add_argument("--queue-capacity", type=_queue_arg,
                       help=f"override every queue limit, or '{TABLE_QUEUE}' for the device table")
        p.add_argument("--env", choices=ENVIRONMENTS)
        p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="virtual seconds")
    p.add_argument("--log-messages", action="store_true", help="write the wire log per run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarm-offload",
                                     description="Simulate task offloading in a device swarm.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single scenario")
    _add_scenario_flags(p_run, single=True)
    p_run.add_argument("--out", type=Path, default=Path("out"))
    p_run.add_argument("--table", action="store_true", help="print the summary table")

    p_mat = sub.add_parser("matrix", help="run a sweep of scenarios")
    _add_scenario_flags(p_mat, single=False)
    p_mat.add_argument("--strategy", dest="strategies", nargs="+", choices=STRATEGIES,
                       default=list(STRATEGIES))
    p_mat.add_argument("--nodes", dest="node_counts", nargs="+", type=int, default=[10, 25, 50, 100])
    p_mat.add_argument("--queue-capacity", dest="queues", nargs="+", type=_queue_arg,
                       default=[5, 10, 15])
    p_mat.add_argument("--env", dest="environments", nargs="+", choices=ENVIRONMENTS,
                       default=list(ENVIRONMENTS))
    p_mat.add_argument("--seed", dest="seeds", nargs="+", type=int, default=[1, 2, 3, 4, 5])
    p_mat.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_mat.add_argument("--out", type=Path, default=Path("out"))

    p_val = sub.add_parser("validate", help="check a config without running it")
    _add_scenario_flags(p_val, single=True)
    return parser


def _base_mapping(args: argparse.Namespace) -> dict[str, Any]:
    data: dict[str, Any] = {}
    if args.config is not None:
        data.update(parse_config_text(args.config.read_text()))
    if args.duration is not None:
        data["duration_s"] = args.duration
    if args.log_messages:
        data["log_messages"] = True
    return data


def _single_config(args: argparse.Namespace) -> ScenarioConfig:
    data = _base_mapping(args)
    for flag, key in (("strategy", "strategy"), ("nodes", "node_count"), ("env", "environment"),
                      ("seed", "seed")):
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    if "queue_capacity" in vars(args) and args.queue_capacity is not None:
        data["queue_capacity"] = args.queue_capacity
    return ScenarioConfig.from_mapping(data)


def write_outputs(results: list[RunResult], out: Path) -> list[dict[str, Any]]:
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for res in results:
        write_artifacts(res, out)
        rows.append(result_row(res))
    write_summary_csv(rows, out / "summary.csv")
    (out / "table.txt").write_text(render_table(rows))
    return rows


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            cfg = _single_config(args)
            print(f"ok: {cfg.cell_name()}")
            return 0
        if args.command == "run":
            cfg = _single_config(args)
            rows = write_outputs([run(cfg)], args.out)
            if args.table:
                print(render_table(rows), end="")
            else:
                r = rows[0]
                print(" ".join(f"{m}={_cell(r[m], m)}" for m in METRICS))
            return 0
        base = _base_mapping(args)
        matrix = RunMatrix(args.strategies, args.node_counts, args.queues, args.environments,
                           args.seeds, base)
        configs = matrix.cells()
        rows = write_outputs(run_cells(configs, args.jobs), args.out)
        print(render_table(rows), end="")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
