"""Forward/backward-ant offloading: pheromone tables, transition rule,
quality pheromones, trail updates and timed evaporation."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping, Optional, Sequence, Union

from .core import (
    TASK_TYPES,
    DeviceSpec,
    MessageEnvelope,
    MessageKind,
    NodeProfile,
    Task,
    TaskType,
    capacity_factor,
    supports,
)

if TYPE_CHECKING:
    from .engine import Engine


class NoNeighbors(RuntimeError):
    pass


@dataclass
class ACOParams:
    alpha: float = 2.0
    beta: float = 1.0
    rho: float = 0.3
    tau0: float = 50.0
    tau0_plus: float = 100.0
    evaporation_interval_s: float = 60.0

    def __post_init__(self) -> None:
        if not 0 < self.tau0 < self.tau0_plus:
            raise ValueError("need 0 < tau0 < tau0_plus")
        if not 0 <= self.rho <= 1:
            raise ValueError("rho must be in [0, 1]")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.evaporation_interval_s <= 0:
            raise ValueError("evaporation_interval_s must be positive")


class PheromoneTable:
    """Pheromone level per (neighbor, task type) held by one node."""

    def __init__(self, entries: Optional[Mapping[tuple[str, TaskType], float]] = None):
        self._tau: dict[tuple[str, TaskType], float] = dict(entries or {})

    def get(self, neighbor: str, t: TaskType, default: Optional[float] = None) -> Optional[float]:
        return self._tau.get((neighbor, t), default)

    def __getitem__(self, key: tuple[str, TaskType]) -> float:
        return self._tau[key]

    def __setitem__(self, key: tuple[str, TaskType], value: float) -> None:
        if value < 0:
            raise ValueError("pheromone must be non-negative")
        self._tau[key] = value

    def __contains__(self, key: tuple[str, TaskType]) -> bool:
        return key in self._tau

    def __len__(self) -> int:
        return len(self._tau)

    def items(self):
        return sorted(self._tau.items(), key=lambda kv: (kv[0][0], kv[0][1].value))

    def neighbors(self) -> list[str]:
        return sorted({n for n, _ in self._tau})

    def drop_neighbor(self, neighbor: str) -> None:
        for key in [k for k in self._tau if k[0] == neighbor]:
            del self._tau[key]

    def clear(self) -> None:
        self._tau.clear()

    def by_neighbor(self) -> dict[str, dict[TaskType, float]]:
        view: dict[str, dict[TaskType, float]] = {}
        for (n, t), tau in self._tau.items():
            view.setdefault(n, {})[t] = tau
        return view

    def csv_rows(self) -> list[tuple[str, str, float]]:
        return [(n, t.value, tau) for (n, t), tau in self.items()]

    def to_csv(self) -> str:
        lines = ["neighbor,task_type,tau"]
        lines += [f"{n},{t},{tau!r}" for n, t, tau in self.csv_rows()]
        return "\n".join(lines) + "\n"


def heuristic_eta(neighbor: Union[NodeProfile, DeviceSpec], t: TaskType, params: ACOParams) -> float:
    spec = neighbor.spec if isinstance(neighbor, NodeProfile) else neighbor
    return params.tau0_plus if supports(spec, t) else params.tau0


def init_pheromones(table: PheromoneTable, neighbor: NodeProfile, params: ACOParams) -> PheromoneTable:
    for t in TASK_TYPES:
        table[neighbor.node_id, t] = heuristic_eta(neighbor, t, params)
    return table


def candidate_set(neighbors: Sequence[str], excluded: Iterable[str]) -> tuple[list[str], bool]:
    """Neighbors not yet excluded; falls back to all of them (flag True) if none remain."""
    if not neighbors:
        raise NoNeighbors("node has no neighbors")
    skip = set(excluded)
    cands = [n for n in neighbors if n not in skip]
    if cands:
        return cands, False
    return list(neighbors), True


def transition_probabilities(
    neighbors: Sequence[str],
    t: TaskType,
    excluded: Iterable[str],
    table: PheromoneTable,
    params: ACOParams,
    specs: Mapping[str, DeviceSpec],
) -> dict[str, float]:
    cands, _ = candidate_set(neighbors, excluded)
    weights = {}
    for j in cands:
        tau = table.get(j, t, params.tau0)
        eta = heuristic_eta(specs[j], t, params)
        weights[j] = tau ** params.alpha * eta ** params.beta
    total = sum(weights.values())
    if total <= 0:
        return {j: 1.0 / len(cands) for j in cands}
    return {j: w / total for j, w in weights.items()}


def queue_quality(l_avg: float, l_limit: int) -> float:
    if l_limit <= 0:
        raise ValueError("l_limit must be positive")
    if l_avg < 0:
        raise ValueError("l_avg must be non-negative")
    headroom = 1 - l_avg / l_limit
    return 0.0 if headroom <= 0 else headroom


def quality_pheromones(q_l: float, spec: DeviceSpec) -> float:
    return q_l * (1 / capacity_factor(spec))


def delta_pheromone(q: float, hops_to_origin: int) -> float:
    if hops_to_origin < 1:
        raise ValueError("hops_to_origin must be >= 1")
    return (q * (1 / hops_to_origin)) * 100


def update_pheromone(
    table: PheromoneTable, neighbor: str, t: TaskType, delta: float, params: ACOParams
) -> PheromoneTable:
    table[neighbor, t] = table.get(neighbor, t, params.tau0) + delta
    return table


def evaporate(table: PheromoneTable, params: ACOParams) -> PheromoneTable:
    keep = 1 - params.rho
    for key, tau in list(table._tau.items()):
        table._tau[key] = keep * tau
    return table


@dataclass
class ForwardAnt:
    req: str
    task: Task
    ttl_remaining_ms: int
    path: list[str]
    fallback: bool = False

    def to_payload(self) -> dict:
        return {
            "req": self.req,
            "task": self.task.to_dict(),
            "ttl_remaining_ms": self.ttl_remaining_ms,
            "path": list(self.path),
            "fallback": self.fallback,
        }

    @classmethod
    def from_payload(cls, p: dict) -> "ForwardAnt":
        return cls(p["req"], Task.from_dict(p["task"]), int(p["ttl_remaining_ms"]),
                   list(p["path"]), bool(p["fallback"]))


@dataclass
class BackwardAnt:
    req: str
    task_type: TaskType
    quality: float
    path: list[str]
    cursor: int
    result: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "req": self.req,
            "task_type": self.task_type.value,
            "quality": self.quality,
            "path": list(self.path),
            "cursor": self.cursor,
            "result": dict(self.result),
        }

    @classmethod
    def from_payload(cls, p: dict) -> "BackwardAnt":
        return cls(p["req"], TaskType(p["task_type"]), float(p["quality"]),
                   list(p["path"]), int(p["cursor"]), dict(p["result"]))


@dataclass(frozen=True)
class Accept:
    pass


@dataclass(frozen=True)
class Hop:
    next: str
    ant: object = None


@dataclass(frozen=True)
class Expire:
    pass


@dataclass(frozen=True)
class ArriveOrigin:
    pass


def forward_ant_step(
    ant: ForwardAnt,
    here: str,
    *,
    here_spec: DeviceSpec,
    here_overloaded: bool,
    neighbors: Sequence[str],
    table: PheromoneTable,
    params: ACOParams,
    specs: Mapping[str, DeviceSpec],
    rng: random.Random,
    hop_ms: int,
) -> Union[Accept, Hop, Expire]:
    """Decide what the forward ant does at ``here``.

    The origin (first path entry) never accepts its own offloaded task.
    """
    at_origin = len(ant.path) == 1
    if not at_origin and supports(here_spec, ant.task.task_type) and not here_overloaded:
        return Accept()
    if ant.ttl_remaining_ms <= 0:
        return Expire()
    try:
        cands, fallback = candidate_set(neighbors, ant.path)
    except NoNeighbors:
        return Expire()
    probs = transition_probabilities(cands, ant.task.task_type, (), table, params, specs)
    order = sorted(probs)
    nxt = rng.choices(order, weights=[probs[j] for j in order])[0]
    moved = ForwardAnt(ant.req, ant.task, ant.ttl_remaining_ms - hop_ms,
                       ant.path + [nxt], ant.fallback or fallback)
    return Hop(nxt, moved)


def backward_ant_step(
    ant: BackwardAnt,
    here: str,
    table: PheromoneTable,
    params: ACOParams,
    neighbors: Optional[Iterable[str]] = None,
) -> Union[Hop, ArriveOrigin]:
    """Deposit on edge ``path[i] -> path[i+1]`` at ``here == path[i]``,
    then move one step toward the origin.

    The edge ``i`` hops from the origin receives ``delta(Q, i + 1)`` so the
    origin's own outgoing edge gets the largest deposit. When ``neighbors`` is
    given, edges to nodes that are no longer neighbors are skipped.
    """
    i = ant.cursor
    if ant.path[i] != here:
        raise ValueError(f"backward ant at {here} but cursor points to {ant.path[i]}")
    nxt = ant.path[i + 1]
    if neighbors is None or nxt in set(neighbors):
        update_pheromone(table, nxt, ant.task_type, delta_pheromone(ant.quality, i + 1), params)
    if i == 0:
        return ArriveOrigin()
    moved = BackwardAnt(ant.req, ant.task_type, ant.quality, ant.path, i - 1, ant.result)
    return Hop(ant.path[i - 1], moved)


class ACOStrategy:
    """Engine adapter: one forward ant per offload request, one backward ant per accept."""

    name = "aco"

    def __init__(self, params: ACOParams):
        self.params = params
        self.tables: dict[str, PheromoneTable] = {}
        self.forward_ants = 0
        self.backward_ants = 0

    def table(self, node: str) -> PheromoneTable:
        return self.tables.setdefault(node, PheromoneTable())

    # lifecycle hooks
    def on_connect(self, engine: "Engine", node: str, peer: str) -> None:
        init_pheromones(self.table(node), engine.profiles[peer], self.params)

    def on_disconnect(self, engine: "Engine", node: str, peer: str) -> None:
        self.table(node).drop_neighbor(peer)

    def reset_node(self, engine: "Engine", node: str) -> list:
        self.table(node).clear()
        return []

    def attractiveness(self, engine: "Engine", node: str) -> dict[str, dict[TaskType, float]]:
        return self.table(node).by_neighbor()

    def evaporate(self, engine: "Engine", node: str) -> None:
        evaporate(self.table(node), self.params)

    # offload flow
    def start_offload(self, engine: "Engine", origin: str, task: Task, req: str) -> None:
        self.forward_ants += 1
        ant = ForwardAnt(req, task, task.ttl_ms, [origin])
        self._advance(engine, origin, ant)

    def _advance(self, engine: "Engine", here: str, ant: ForwardAnt) -> None:
        node = engine.nodes[here]
        step = forward_ant_step(
            ant, here,
            here_spec=node.profile.spec,
            here_overloaded=node.queue.overloaded,
            neighbors=engine.graph.usable_neighbors(here),
            table=self.table(here),
            params=self.params,
            specs=engine.specs,
            rng=engine.strategy_rng,
            hop_ms=engine.hop_ms,
        )
        if isinstance(step, Accept):
            engine.accept_remote(here, ant.task, ant.req, hops=len(ant.path) - 1,
                                 route=ant.path)
        elif isinstance(step, Hop):
            engine.send(MessageKind.FORWARD_ANT, here, step.next, step.ant.to_payload(), req=ant.req)
        else:
            engine.request_expired(ant.req, ant.task)

    def on_remote_complete(self, engine: "Engine", target: str, req: str, task: Task,
                           route: list[str], quality: float) -> None:
        self.backward_ants += 1
        ant = BackwardAnt(req, task.task_type, quality, list(route), len(route) - 2,
                          {"task_id": task.task_id, "target": target})
        engine.send(MessageKind.BACKWARD_ANT, target, route[-2], ant.to_payload(), req=req)

    def on_message(self, engine: "Engine", msg: MessageEnvelope) -> None:
        here = msg.receiver
        if msg.kind is MessageKind.FORWARD_ANT:
            self._advance(engine, here, ForwardAnt.from_payload(msg.payload))
        elif msg.kind is MessageKind.BACKWARD_ANT:
            ant = BackwardAnt.from_payload(msg.payload)
            step = backward_ant_step(ant, here, self.table(here), self.params,
                                     engine.graph.neighbors(here))
            if isinstance(step, ArriveOrigin):
                engine.result_returned(ant.req, here)
            else:
                engine.send(MessageKind.BACKWARD_ANT, here, step.next, step.ant.to_payload(),
                            req=ant.req)
        else:
            raise ValueError(f"aco cannot handle {msg.kind}")

    def on_drop(self, engine: "Engine", msg: MessageEnvelope) -> None:
        if msg.kind is MessageKind.FORWARD_ANT:
            ant = ForwardAnt.from_payload(msg.payload)
            engine.request_lost_in_flight(ant.req, ant.task)
