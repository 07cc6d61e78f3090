"""Swarm graph, node discovery handshakes and self-actualization rewiring."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .core import NodeProfile, TaskType


class TopologyError(RuntimeError):
    pass


@dataclass
class TopologyParams:
    min_connections: int = 2
    max_connections: int = 8
    target_degree: int = 4
    sa_enabled: bool = True
    sa_interval_s: float = 300.0
    sa_links: int = 1
    notice_grace_s: float = 30.0
    block_duration_s: float = 600.0

    def __post_init__(self) -> None:
        if not 1 <= self.target_degree <= self.max_connections:
            raise ValueError("target_degree must be in [1, max_connections]")
        if self.min_connections < 0 or self.min_connections > self.max_connections:
            raise ValueError("min_connections must be in [0, max_connections]")
        if self.sa_links < 1:
            raise ValueError("sa_links must be >= 1")


class Handshake(str, Enum):
    ACCEPTED = "accepted"
    BLOCKED = "blocked"
    FULL = "full"
    DUPLICATE = "duplicate"


@dataclass
class SwarmGraph:
    """Undirected overlay stored as symmetric adjacency sets.

    ``blocked[a][b]`` is the time (ms) at which ``a`` stops refusing ``b``.
    ``draining[a]`` holds neighbors ``a`` must no longer offload to because a
    disconnect notice is pending between them.
    """

    adjacency: dict[str, set[str]] = field(default_factory=dict)
    max_connections: dict[str, int] = field(default_factory=dict)
    blocked: dict[str, dict[str, int]] = field(default_factory=dict)
    draining: dict[str, set[str]] = field(default_factory=dict)

    def add_node(self, node: str, max_connections: int) -> None:
        self.adjacency.setdefault(node, set())
        self.max_connections[node] = max_connections
        self.blocked.setdefault(node, {})
        self.draining.setdefault(node, set())

    @property
    def nodes(self) -> list[str]:
        return sorted(self.adjacency)

    def neighbors(self, node: str) -> list[str]:
        return sorted(self.adjacency[node])

    def usable_neighbors(self, node: str) -> list[str]:
        drain = self.draining[node]
        return sorted(n for n in self.adjacency[node] if n not in drain)

    def degree(self, node: str) -> int:
        return len(self.adjacency[node])

    def has_edge(self, a: str, b: str) -> bool:
        return b in self.adjacency[a]

    def edges(self) -> list[tuple[str, str]]:
        """Each undirected edge once, as ``(a, b)`` with ``a < b``."""
        return sorted((a, b) for a, nbrs in self.adjacency.items() for b in nbrs if a < b)

    def directed_edge_count(self) -> int:
        return sum(len(n) for n in self.adjacency.values())

    def is_blocked(self, a: str, b: str, now_ms: int) -> bool:
        """True if either side still holds the other on its block list."""
        for x, y in ((a, b), (b, a)):
            until = self.blocked[x].get(y)
            if until is not None:
                if now_ms < until:
                    return True
                del self.blocked[x][y]
        return False

    def block(self, a: str, b: str, until_ms: int) -> None:
        self.blocked[a][b] = until_ms

    def connect(self, a: str, b: str) -> None:
        self.adjacency[a].add(b)
        self.adjacency[b].add(a)

    def disconnect(self, a: str, b: str) -> None:
        self.adjacency[a].discard(b)
        self.adjacency[b].discard(a)
        self.draining[a].discard(b)
        self.draining[b].discard(a)

    def isolate(self, node: str) -> list[str]:
        """Drop every edge of ``node``; returns the former neighbors."""
        former = self.neighbors(node)
        for other in former:
            self.disconnect(node, other)
        self.draining[node].clear()
        return former

    def is_connected(self, among: Optional[Iterable[str]] = None) -> bool:
        nodes = set(self.adjacency if among is None else among)
        if not nodes:
            return True
        start = min(nodes)
        seen = {start}
        todo = deque([start])
        while todo:
            cur = todo.popleft()
            for nxt in self.adjacency[cur]:
                if nxt in nodes and nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        return seen == nodes

    def edge_list_text(self) -> str:
        return "".join(f"{a} {b}\n" for a, b in self.edges())


def handshake(
    a: str,
    b: str,
    graph: SwarmGraph,
    now_ms: int = 0,
    on_connect: Optional[Callable[[str, str], None]] = None,
) -> Handshake:
    """Profile exchange between ``a`` and ``b``; adds the edge on success."""
    if a == b:
        raise ValueError("a node cannot handshake with itself")
    if graph.has_edge(a, b):
        return Handshake.DUPLICATE
    if graph.is_blocked(a, b, now_ms):
        return Handshake.BLOCKED
    if graph.degree(a) >= graph.max_connections[a] or graph.degree(b) >= graph.max_connections[b]:
        return Handshake.FULL
    graph.connect(a, b)
    if on_connect is not None:
        on_connect(a, b)
        on_connect(b, a)
    return Handshake.ACCEPTED


def build_initial_topology(
    profiles: Sequence[NodeProfile],
    target_degree: int,
    rng: random.Random,
    max_retries: int = 50,
) -> SwarmGraph:
    """Random connected overlay: a random spanning tree, then random chords
    until every node reaches ``target_degree`` or runs out of partners."""
    if target_degree < 1:
        raise ValueError("target_degree must be >= 1")
    if len(profiles) < 2:
        raise ValueError("need at least two nodes")
    ids = [p.node_id for p in profiles]
    if len(set(ids)) != len(ids):
        raise ValueError("node ids must be unique")
    caps = {p.node_id: p.max_connections for p in profiles}

    for _ in range(max_retries):
        graph = SwarmGraph()
        for p in profiles:
            graph.add_node(p.node_id, p.max_connections)
        order = sorted(ids)
        rng.shuffle(order)
        ok = True
        for i, node in enumerate(order[1:], start=1):
            hosts = [h for h in order[:i] if graph.degree(h) < caps[h]]
            if not hosts:
                ok = False
                break
            graph.connect(node, rng.choice(hosts))
        if not ok:
            continue
        goal = {n: min(target_degree, caps[n]) for n in ids}
        for node in order:
            want = goal[node] - graph.degree(node)
            if want <= 0:
                continue
            pool = [
                o for o in sorted(ids)
                if o != node and not graph.has_edge(node, o) and graph.degree(o) < goal[o]
            ]
            rng.shuffle(pool)
            for other in pool[:want]:
                graph.connect(node, other)
        if graph.is_connected():
            return graph
    raise TopologyError(f"no connected topology after {max_retries} attempts")


AttractivenessView = Mapping[str, Mapping[TaskType, float]]


def weakest_links(view: AttractivenessView, k: int) -> list[str]:
    """The ``k`` neighbors with the smallest summed attractiveness, weakest first."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = sorted((sum(per_type.values()), nbr) for nbr, per_type in view.items())
    return [nbr for _, nbr in scored[:k]]


@dataclass(frozen=True)
class SendNotice:
    peer: str


@dataclass(frozen=True)
class ScheduleDisconnect:
    peer: str
    at_ms: int


def self_actualize(
    node: str,
    graph: SwarmGraph,
    view: AttractivenessView,
    now_ms: int,
    params: TopologyParams,
) -> list:
    """First phase of rewiring: pick weak links, mark them draining, and
    return the notices plus the deferred disconnects for the caller to run."""
    spare = graph.degree(node) - params.min_connections - len(graph.draining[node])
    if spare <= 0:
        return []
    candidates = {
        n: view.get(n, {}) for n in graph.neighbors(node) if n not in graph.draining[node]
    }
    if not candidates:
        return []
    actions: list = []
    at = now_ms + int(round(params.notice_grace_s * 1000))
    for peer in weakest_links(candidates, min(params.sa_links, spare)):
        graph.draining[node].add(peer)
        actions.append(SendNotice(peer))
        actions.append(ScheduleDisconnect(peer, at))
    return actions


def receive_notice(graph: SwarmGraph, receiver: str, sender: str) -> None:
    if graph.has_edge(receiver, sender):
        graph.draining[receiver].add(sender)


def finish_disconnect(graph: SwarmGraph, a: str, b: str, now_ms: int, params: TopologyParams) -> bool:
    """Second phase: drop the edge and block both sides. False if already gone."""
    if not graph.has_edge(a, b):
        graph.draining[a].discard(b)
        graph.draining[b].discard(a)
        return False
    graph.disconnect(a, b)
    until = now_ms + int(round(params.block_duration_s * 1000))
    graph.block(a, b, until)
    graph.block(b, a, until)
    return True


def restore_degree(
    graph: SwarmGraph,
    node: str,
    goal: int,
    rng: random.Random,
    now_ms: int,
    eligible: Callable[[str], bool] = lambda n: True,
    on_connect: Optional[Callable[[str, str], None]] = None,
) -> list[str]:
    """Handshake with random non-neighbors until ``node`` has ``goal`` links."""
    added: list[str] = []
    if graph.degree(node) >= goal:
        return added
    pool = [
        n for n in graph.nodes
        if n != node and not graph.has_edge(node, n) and eligible(n)
    ]
    rng.shuffle(pool)
    for other in pool:
        if graph.degree(node) >= goal:
            break
        if handshake(node, other, graph, now_ms, on_connect) is Handshake.ACCEPTED:
            added.append(other)
    return added
