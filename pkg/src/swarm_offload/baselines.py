"""Random-walk and two-phase Gossips offloading strategies."""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional, Sequence, Union

from .aco import Accept, Expire, Hop, queue_quality
from .core import (
    DeviceSpec,
    MessageEnvelope,
    MessageKind,
    Task,
    TaskType,
    supports,
)

if TYPE_CHECKING:
    from .engine import Engine


def random_offload_step(
    task: Task,
    here: str,
    ttl_remaining_ms: int,
    rng: random.Random,
    *,
    here_spec: DeviceSpec,
    here_overloaded: bool,
    neighbors: Sequence[str],
    sender: Optional[str] = None,
    at_origin: bool = False,
) -> Union[Accept, Hop, Expire]:
    """One step of the random walk. The immediate sender is excluded unless it
    is the only neighbor."""
    if not at_origin and supports(here_spec, task.task_type) and not here_overloaded:
        return Accept()
    if ttl_remaining_ms <= 0 or not neighbors:
        return Expire()
    cands = [n for n in neighbors if n != sender] or list(neighbors)
    return Hop(rng.choice(cands))


class RandomStrategy:
    name = "random"

    def __init__(self) -> None:
        self.message_counts: dict[str, dict[str, dict[TaskType, int]]] = defaultdict(
            lambda: defaultdict(lambda: defaultdict(int)))

    def on_connect(self, engine: "Engine", node: str, peer: str) -> None:
        pass

    def on_disconnect(self, engine: "Engine", node: str, peer: str) -> None:
        self.message_counts[node].pop(peer, None)

    def reset_node(self, engine: "Engine", node: str) -> list:
        self.message_counts.pop(node, None)
        return []

    def attractiveness(self, engine: "Engine", node: str) -> dict[str, dict[TaskType, float]]:
        counts = self.message_counts[node]
        return {n: dict(counts.get(n, {})) for n in engine.graph.neighbors(node)}

    def evaporate(self, engine: "Engine", node: str) -> None:
        pass

    def start_offload(self, engine: "Engine", origin: str, task: Task, req: str) -> None:
        self._advance(engine, origin, req, task, task.ttl_ms, [origin], None)

    def _advance(self, engine, here, req, task, ttl, path, sender) -> None:
        node = engine.nodes[here]
        step = random_offload_step(
            task, here, ttl, engine.strategy_rng,
            here_spec=node.profile.spec,
            here_overloaded=node.queue.overloaded,
            neighbors=engine.graph.usable_neighbors(here),
            sender=sender,
            at_origin=len(path) == 1,
        )
        if isinstance(step, Accept):
            engine.accept_remote(here, task, req, hops=len(path) - 1, route=path)
        elif isinstance(step, Hop):
            payload = {"req": req, "task": task.to_dict(), "ttl_remaining_ms": ttl - engine.hop_ms,
                       "path": path + [step.next]}
            engine.send(MessageKind.OFFLOAD, here, step.next, payload, req=req, search=True)
        else:
            engine.request_expired(req, task)

    def on_remote_complete(self, engine, target, req, task, route, quality) -> None:
        payload = {"req": req, "status": "done", "task_type": task.task_type.value,
                   "path": list(route), "cursor": len(route) - 2}
        engine.send(MessageKind.RESULT, target, route[-2], payload, req=req)

    def on_message(self, engine: "Engine", msg: MessageEnvelope) -> None:
        p = msg.payload
        here = msg.receiver
        if msg.kind is MessageKind.OFFLOAD:
            task = Task.from_dict(p["task"])
            self.message_counts[here][msg.sender][task.task_type] += 1
            self._advance(engine, here, p["req"], task, p["ttl_remaining_ms"], list(p["path"]),
                          msg.sender)
        elif msg.kind is MessageKind.RESULT:
            self.message_counts[here][msg.sender][TaskType(p["task_type"])] += 1
            cursor = p["cursor"]
            if cursor == 0:
                engine.result_returned(p["req"], here)
            else:
                fwd = dict(p, cursor=cursor - 1)
                engine.send(MessageKind.RESULT, here, p["path"][cursor - 1], fwd, req=p["req"])
        else:
            raise ValueError(f"random cannot handle {msg.kind}")

    def on_drop(self, engine: "Engine", msg: MessageEnvelope) -> None:
        if msg.kind is MessageKind.OFFLOAD:
            engine.request_lost_in_flight(msg.payload["req"], Task.from_dict(msg.payload["task"]))


# --- Gossips -----------------------------------------------------------------


@dataclass
class GossipDiscoveryMsg:
    gossip_id: str
    task_type: TaskType
    origin: str
    path: list[str]
    discovery_deadline_ms: int

    def to_payload(self) -> dict:
        return {"gossip_id": self.gossip_id, "task_type": self.task_type.value,
                "origin": self.origin, "path": list(self.path),
                "discovery_deadline_ms": self.discovery_deadline_ms}

    @classmethod
    def from_payload(cls, p: dict) -> "GossipDiscoveryMsg":
        return cls(p["gossip_id"], TaskType(p["task_type"]), p["origin"], list(p["path"]),
                   int(p["discovery_deadline_ms"]))


@dataclass
class GossipResponseMsg:
    """Capability report; ``path`` runs origin -> responder."""

    gossip_id: str
    responder: str
    queue_occupation: int
    queue_limit: int
    capacities: tuple[int, int, int]
    path: list[str]
    task_type: TaskType = TaskType.T1
    cursor: int = 0

    @property
    def hops(self) -> int:
        return len(self.path) - 1

    @property
    def capacity_factor(self) -> float:
        return sum(self.capacities) / 3

    def to_payload(self) -> dict:
        return {"gossip_id": self.gossip_id, "responder": self.responder,
                "queue_occupation": self.queue_occupation, "queue_limit": self.queue_limit,
                "capacities": list(self.capacities), "path": list(self.path),
                "task_type": self.task_type.value, "cursor": self.cursor}

    @classmethod
    def from_payload(cls, p: dict) -> "GossipResponseMsg":
        return cls(p["gossip_id"], p["responder"], int(p["queue_occupation"]),
                   int(p["queue_limit"]), tuple(p["capacities"]), list(p["path"]),
                   TaskType(p["task_type"]), int(p["cursor"]))


@dataclass
class GossipSeenSet:
    """gossip ids one node has already handled, each kept until its deadline."""

    expiry: dict[str, int] = field(default_factory=dict)

    def __contains__(self, gossip_id: str) -> bool:
        return gossip_id in self.expiry

    def mark(self, gossip_id: str, until_ms: int) -> None:
        self.expiry[gossip_id] = until_ms

    def purge(self, now_ms: int) -> None:
        for gid in [g for g, t in self.expiry.items() if t < now_ms]:
            del self.expiry[gid]


def gossip_spread(
    origin: str, task: Task, deadline_ms: int, neighbors: Sequence[str], gossip_id: str
) -> list[tuple[str, GossipDiscoveryMsg]]:
    msg = GossipDiscoveryMsg(gossip_id, task.task_type, origin, [origin], deadline_ms)
    return [(n, msg) for n in neighbors]


@dataclass
class DiscoveryOutcome:
    dropped: bool
    response: Optional[GossipResponseMsg] = None
    forwards: list[tuple[str, GossipDiscoveryMsg]] = field(default_factory=list)


def gossip_handle_discovery(
    here: str,
    msg: GossipDiscoveryMsg,
    seen: GossipSeenSet,
    now_ms: int,
    *,
    spec: DeviceSpec,
    occupation: int,
    queue_limit: int,
    neighbors: Sequence[str],
    sender: str,
) -> DiscoveryOutcome:
    """Drop duplicates and late copies; otherwise respond if capable and
    forward to every neighbor except the sender."""
    if msg.gossip_id in seen or now_ms > msg.discovery_deadline_ms:
        return DiscoveryOutcome(dropped=True)
    seen.mark(msg.gossip_id, msg.discovery_deadline_ms)
    path = msg.path + [here]
    response = None
    if supports(spec, msg.task_type) and occupation < queue_limit:
        response = GossipResponseMsg(
            msg.gossip_id, here, occupation, queue_limit,
            (spec.c_comm, spec.c_comp, spec.c_storage), path, msg.task_type,
            cursor=len(path) - 2,
        )
    copy = GossipDiscoveryMsg(msg.gossip_id, msg.task_type, msg.origin, path,
                              msg.discovery_deadline_ms)
    forwards = [(n, copy) for n in neighbors if n != sender]
    return DiscoveryOutcome(dropped=False, response=response, forwards=forwards)


def gossip_score(r: GossipResponseMsg) -> float:
    return queue_quality(r.queue_occupation, r.queue_limit) / r.capacity_factor / max(r.hops, 1)


def gossip_rank(responses: Sequence[GossipResponseMsg]) -> list[GossipResponseMsg]:
    return sorted(responses, key=lambda r: (-gossip_score(r), r.responder))


@dataclass
class OffloadOutcome:
    target: Optional[str]
    attempts: int

    @property
    def hit(self) -> bool:
        return self.target is not None


def gossip_offload(
    ranked: Sequence[GossipResponseMsg], accepts: Callable[[GossipResponseMsg], bool]
) -> OffloadOutcome:
    """Synchronous form of the offload phase: walk the ranking until a target
    accepts. The engine runs the same order asynchronously over messages."""
    for i, r in enumerate(ranked, start=1):
        if accepts(r):
            return OffloadOutcome(r.responder, i)
    return OffloadOutcome(None, len(ranked))


@dataclass
class _Pending:
    task: Task
    origin: str
    gossip_id: str
    discovery_deadline_ms: int
    responses: list[GossipResponseMsg] = field(default_factory=list)
    ranked: list[GossipResponseMsg] = field(default_factory=list)
    next_index: int = 0
    task_at_origin: bool = True


class GossipStrategy:
    name = "gossips"

    def __init__(self, discovery_fraction: float = 0.5):
        if not 0 < discovery_fraction < 1:
            raise ValueError("discovery_fraction must be in (0, 1)")
        self.discovery_fraction = discovery_fraction
        self.seen: dict[str, GossipSeenSet] = defaultdict(GossipSeenSet)
        self.pending: dict[str, _Pending] = {}
        self.message_counts: dict[str, dict[str, dict[TaskType, int]]] = defaultdict(
            lambda: defaultdict(lambda: defaultdict(int)))
        self.forwarded: dict[tuple[str, str], int] = defaultdict(int)

    def on_connect(self, engine, node, peer) -> None:
        pass

    def on_disconnect(self, engine, node, peer) -> None:
        self.message_counts[node].pop(peer, None)

    def reset_node(self, engine: "Engine", node: str) -> list[tuple[str, Task]]:
        """Forget per-node state; returns (req, task) pairs whose task sat at the node.

        The seen-set is kept: it expires on its own, and a restarted node must
        not relay a discovery it already relayed before going down.
        """
        self.message_counts.pop(node, None)
        held = []
        for req in [r for r, p in self.pending.items() if p.origin == node]:
            p = self.pending.pop(req)
            if p.task_at_origin:
                held.append((req, p.task))
        return held

    def attractiveness(self, engine, node) -> dict[str, dict[TaskType, float]]:
        counts = self.message_counts[node]
        return {n: dict(counts.get(n, {})) for n in engine.graph.neighbors(node)}

    def evaporate(self, engine, node) -> None:
        self.seen[node].purge(engine.now)

    def start_offload(self, engine: "Engine", origin: str, task: Task, req: str) -> None:
        neighbors = engine.graph.usable_neighbors(origin)
        if not neighbors:
            engine.request_expired(req, task)
            return
        deadline = engine.now + int(round(task.ttl_ms * self.discovery_fraction))
        gid = f"g-{req}"
        self.seen[origin].mark(gid, deadline)
        self.pending[req] = _Pending(task, origin, gid, deadline)
        for nbr, msg in gossip_spread(origin, task, deadline, neighbors, gid):
            self.forwarded[(origin, gid)] += 1
            payload = dict(msg.to_payload(), req=req)
            engine.send(MessageKind.GOSSIP_DISCOVERY, origin, nbr, payload, req=req)
        engine.schedule(deadline, self._discovery_done, engine, req)

    def _discovery_done(self, engine: "Engine", req: str) -> None:
        p = self.pending.get(req)
        if p is None:
            return
        p.ranked = gossip_rank(p.responses)
        self._try_next(engine, req)

    def _try_next(self, engine: "Engine", req: str) -> None:
        p = self.pending[req]
        if p.next_index >= len(p.ranked) or engine.now >= p.task.deadline_ms:
            del self.pending[req]
            engine.request_expired(req, p.task)
            return
        target = p.ranked[p.next_index]
        p.next_index += 1
        p.task_at_origin = False
        payload = {"req": req, "task": p.task.to_dict(), "path": list(target.path), "cursor": 1}
        engine.send(MessageKind.OFFLOAD, p.origin, target.path[1], payload, req=req)

    def on_remote_complete(self, engine, target, req, task, route, quality) -> None:
        payload = {"req": req, "status": "done", "task_type": task.task_type.value,
                   "path": list(route), "cursor": len(route) - 2}
        engine.send(MessageKind.RESULT, target, route[-2], payload, req=req)

    def on_message(self, engine: "Engine", msg: MessageEnvelope) -> None:
        here = msg.receiver
        p = msg.payload
        kind = msg.kind
        if kind is MessageKind.GOSSIP_DISCOVERY:
            d = GossipDiscoveryMsg.from_payload(p)
            self.message_counts[here][msg.sender][d.task_type] += 1
            node = engine.nodes[here]
            out = gossip_handle_discovery(
                here, d, self.seen[here], engine.now,
                spec=node.profile.spec, occupation=node.queue.occupation,
                queue_limit=node.queue.limit,
                neighbors=engine.graph.usable_neighbors(here), sender=msg.sender,
            )
            if out.dropped:
                return
            if out.response is not None:
                r = out.response
                engine.send(MessageKind.GOSSIP_RESPONSE, here, r.path[r.cursor],
                            dict(r.to_payload(), req=p["req"]), req=p["req"])
            for nbr, copy in out.forwards:
                self.forwarded[(here, d.gossip_id)] += 1
                engine.send(MessageKind.GOSSIP_DISCOVERY, here, nbr,
                            dict(copy.to_payload(), req=p["req"]), req=p["req"])
        elif kind is MessageKind.GOSSIP_RESPONSE:
            r = GossipResponseMsg.from_payload(p)
            self.message_counts[here][msg.sender][r.task_type] += 1
            if r.cursor == 0:
                pend = self.pending.get(p["req"])
                if (pend is not None and pend.origin == here
                        and engine.now <= pend.discovery_deadline_ms and not pend.ranked):
                    pend.responses.append(r)
            else:
                r.cursor -= 1
                engine.send(MessageKind.GOSSIP_RESPONSE, here, r.path[r.cursor],
                            dict(r.to_payload(), req=p["req"]), req=p["req"])
        elif kind is MessageKind.OFFLOAD:
            task = Task.from_dict(p["task"])
            self.message_counts[here][msg.sender][task.task_type] += 1
            path, cursor = p["path"], p["cursor"]
            if cursor < len(path) - 1:
                engine.send(MessageKind.OFFLOAD, here, path[cursor + 1],
                            dict(p, cursor=cursor + 1), req=p["req"])
                return
            node = engine.nodes[here]
            if supports(node.profile.spec, task.task_type) and not node.queue.overloaded:
                engine.accept_remote(here, task, p["req"], hops=len(path) - 1, route=path)
            else:
                self._reject(engine, here, p)
        elif kind is MessageKind.RESULT:
            ttype = TaskType(p["task_type"]) if "task_type" in p else Task.from_dict(p["task"]).task_type
            self.message_counts[here][msg.sender][ttype] += 1
            cursor = p["cursor"]
            if cursor > 0:
                engine.send(MessageKind.RESULT, here, p["path"][cursor - 1],
                            dict(p, cursor=cursor - 1), req=p["req"])
            elif p["status"] == "done":
                engine.result_returned(p["req"], here)
            else:
                self._rejected_at_origin(engine, here, p)
        else:
            raise ValueError(f"gossips cannot handle {kind}")

    def _reject(self, engine: "Engine", here: str, offload: dict) -> None:
        """Send the task back toward the origin from position ``here``."""
        path = offload["path"]
        cursor = offload["cursor"]
        payload = {"req": offload["req"], "status": "rejected", "task": offload["task"],
                   "path": list(path), "cursor": cursor - 1}
        if cursor == 0:
            self._rejected_at_origin(engine, here, payload)
            return
        engine.send(MessageKind.RESULT, here, path[cursor - 1], payload, req=offload["req"])

    def _rejected_at_origin(self, engine: "Engine", here: str, p: dict) -> None:
        pend = self.pending.get(p["req"])
        task = Task.from_dict(p["task"])
        if pend is None or pend.origin != here:
            engine.request_lost_in_flight(p["req"], task)
            return
        pend.task_at_origin = True
        self._try_next(engine, p["req"])

    def on_drop(self, engine: "Engine", msg: MessageEnvelope) -> None:
        p = msg.payload
        if msg.kind is MessageKind.OFFLOAD:
            # the sender notices the dead link and bounces the task back
            if engine.nodes[msg.sender].alive:
                self._reject(engine, msg.sender, dict(p, cursor=p["cursor"] - 1))
            else:
                engine.request_lost_in_flight(p["req"], Task.from_dict(p["task"]))
        elif msg.kind is MessageKind.RESULT and p.get("status") == "rejected":
            engine.request_lost_in_flight(p["req"], Task.from_dict(p["task"]))
