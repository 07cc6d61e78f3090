from __future__ import annotations

import random
from typing import Iterable, Optional, Sequence

import pytest

from swarm_offload.core import TASK_TYPES, NodeProfile, QueueState, device_spec
from swarm_offload.engine import Engine, NodeRuntime, ScenarioConfig
from swarm_offload.topology import SwarmGraph

# emitters that never fire inside a scripted run
SILENT_RATES = {t.value: 1e9 for t in TASK_TYPES}


def scripted_engine(
    strategy: str,
    types: Sequence[str],
    edges: Iterable[tuple[int, int]],
    queue_limits: Optional[dict[int, int]] = None,
    **overrides,
) -> Engine:
    """Engine over a hand-built graph with silent emitters.

    Node ``i`` gets device type ``types[i]`` and id ``n00i``.
    """
    cfg = dict(strategy=strategy, node_count=len(types), emitter_rates=dict(SILENT_RATES),
               sa_enabled=False, duration_s=600.0)
    cfg.update(overrides)
    eng = Engine(ScenarioConfig(**cfg))
    ids = sorted(eng.nodes)
    eng.nodes, eng.profiles = {}, {}
    for i, (nid, type_id) in enumerate(zip(ids, types)):
        spec = device_spec(type_id)
        if queue_limits and i in queue_limits:
            spec = spec.with_queue_limit(queue_limits[i])
        prof = NodeProfile(nid, spec, f"sim://{nid}", eng.config.max_connections)
        eng.profiles[nid] = prof
        eng.nodes[nid] = NodeRuntime(prof, QueueState(spec.queue_limit))
    eng.specs = {nid: p.spec for nid, p in eng.profiles.items()}
    eng.strategy = eng._make_strategy()
    eng.ledger.strategy = eng.strategy.name
    g = SwarmGraph()
    for nid in ids:
        g.add_node(nid, eng.config.max_connections)
    for a, b in edges:
        g.connect(ids[a], ids[b])
    eng.graph = g
    for a, b in g.edges():
        eng._on_connect(a, b)
        eng._on_connect(b, a)
    return eng


def small_config(seed: int, **kw) -> ScenarioConfig:
    """Cheap randomized scenario for invariant sweeps."""
    rng = random.Random(f"fixture:{seed}")
    base = dict(
        strategy=rng.choice(["random", "aco", "gossips"]),
        environment=rng.choice(["static", "dynamic"]),
        node_count=rng.randint(6, 14),
        duration_s=float(rng.choice([200, 300, 400])),
        seed=seed,
        queue_capacity=rng.choice([None, 5, 10]),
        target_degree=rng.randint(2, 4),
        failure_interval_s=120.0,
        recovery_interval_s=30.0,
        sa_interval_s=100.0,
        notice_grace_s=10.0,
        block_duration_s=60.0,
    )
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture
def line6():
    """Six nodes in a line; only n003 (m2) and n005 (w5) can run T5."""
    return ["s1", "m1", "w1", "m2", "w4", "w5"], [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]


# criterion number -> "PASS ..." / "FAIL ..." line, filled by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
