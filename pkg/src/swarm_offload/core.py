"""Domain types shared across the simulator: device catalog, tasks, queues, messages."""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable


class TaskType(str, Enum):
    T1 = "T1"
    T2 = "T2"
    T3 = "T3"
    T4 = "T4"
    T5 = "T5"

    def __str__(self) -> str:
        return self.value


TASK_TYPES: tuple[TaskType, ...] = tuple(TaskType)


@dataclass(frozen=True)
class DeviceSpec:
    """Static hardware profile of one device class.

    Capacities run from 1 (best equipped) to 3 (most constrained).
    """

    type_id: str
    supported_types: frozenset[TaskType]
    queue_limit: int
    c_comm: int
    c_comp: int
    c_storage: int
    p_fail: float
    p_recover: float

    def __post_init__(self) -> None:
        for name in ("c_comm", "c_comp", "c_storage"):
            if getattr(self, name) not in (1, 2, 3):
                raise ValueError(f"{self.type_id}: {name} must be 1, 2 or 3")
        for name in ("p_fail", "p_recover"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{self.type_id}: {name} must be in [0, 1]")
        if self.queue_limit <= 0:
            raise ValueError(f"{self.type_id}: queue_limit must be positive")

    def with_queue_limit(self, limit: int) -> "DeviceSpec":
        return DeviceSpec(
            self.type_id, self.supported_types, limit,
            self.c_comm, self.c_comp, self.c_storage, self.p_fail, self.p_recover,
        )


def _spec(type_id, types, queue, comm, comp, storage, p_fail, p_recover) -> DeviceSpec:
    return DeviceSpec(
        type_id, frozenset(TaskType(t) for t in types), queue,
        comm, comp, storage, p_fail, p_recover,
    )


_CATALOG: tuple[DeviceSpec, ...] = (
    _spec("s1", ["T1", "T2"], 10, 1, 1, 1, 0.1, 0.4),
    _spec("s2", ["T3", "T4", "T5"], 15, 1, 2, 1, 0.1, 0.4),
    _spec("m1", ["T1", "T4"], 10, 1, 2, 2, 0.2, 0.3),
    _spec("m2", ["T5"], 5, 2, 2, 2, 0.2, 0.3),
    _spec("m3", ["T2", "T3"], 10, 2, 2, 3, 0.2, 0.3),
    _spec("w1", ["T1"], 5, 3, 3, 3, 0.3, 0.2),
    _spec("w2", ["T2"], 5, 3, 2, 3, 0.3, 0.2),
    _spec("w3", ["T3"], 5, 3, 3, 3, 0.3, 0.2),
    _spec("w4", ["T4"], 5, 3, 3, 3, 0.3, 0.2),
    _spec("w5", ["T5"], 5, 2, 3, 3, 0.3, 0.2),
)
_BY_ID = {s.type_id: s for s in _CATALOG}


def catalog() -> list[DeviceSpec]:
    return list(_CATALOG)


def device_spec(type_id: str) -> DeviceSpec:
    try:
        return _BY_ID[type_id]
    except KeyError:
        raise KeyError(f"unknown device type {type_id!r}") from None


def capacity_factor(spec: DeviceSpec) -> float:
    """Mean of the three capacity ratings; 1.0 is the strongest device."""
    return (spec.c_comm + spec.c_comp + spec.c_storage) / 3


def supports(spec: DeviceSpec, t: TaskType) -> bool:
    return t in spec.supported_types


# base service time per task type, seconds, on a device with capacity factor 1
DEFAULT_PROCESSING_S: dict[TaskType, float] = {
    TaskType.T1: 2.0,
    TaskType.T2: 4.0,
    TaskType.T3: 3.0,
    TaskType.T4: 10.0,
    TaskType.T5: 12.0,
}
DEFAULT_TTL_S = 60.0


def to_ms(seconds: float) -> int:
    return int(round(seconds * 1000))


def effective_processing_ms(task: "Task", spec: DeviceSpec) -> int:
    return max(1, int(round(task.base_processing_ms * capacity_factor(spec))))


@dataclass(frozen=True)
class NodeProfile:
    node_id: str
    spec: DeviceSpec
    listen_address: str
    max_connections: int = 8

    def to_dict(self) -> dict[str, Any]:
        return {
            "node_id": self.node_id,
            "type_id": self.spec.type_id,
            "queue_limit": self.spec.queue_limit,
            "listen_address": self.listen_address,
            "max_connections": self.max_connections,
        }


@dataclass(frozen=True)
class Task:
    task_id: str
    task_type: TaskType
    origin: str
    emitted_at_ms: int
    ttl_ms: int
    base_processing_ms: int

    def __post_init__(self) -> None:
        if self.ttl_ms <= 0:
            raise ValueError("ttl must be positive")
        if self.base_processing_ms <= 0:
            raise ValueError("base processing time must be positive")

    @property
    def deadline_ms(self) -> int:
        return self.emitted_at_ms + self.ttl_ms

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "task_type": self.task_type.value,
            "origin": self.origin,
            "emitted_at_ms": self.emitted_at_ms,
            "ttl_ms": self.ttl_ms,
            "base_processing_ms": self.base_processing_ms,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Task":
        return cls(
            d["task_id"], TaskType(d["task_type"]), d["origin"],
            int(d["emitted_at_ms"]), int(d["ttl_ms"]), int(d["base_processing_ms"]),
        )


@dataclass
class QueueState:
    """FIFO task queue of one node. The head entry is the one in service."""

    limit: int
    entries: deque = field(default_factory=deque)
    sample_sum: float = 0.0
    sample_count: int = 0

    @property
    def occupation(self) -> int:
        return len(self.entries)

    @property
    def overloaded(self) -> bool:
        return len(self.entries) >= self.limit

    @property
    def l_avg(self) -> float:
        if self.sample_count == 0:
            return float(len(self.entries))
        return self.sample_sum / self.sample_count

    def record_sample(self) -> None:
        self.sample_sum += len(self.entries)
        self.sample_count += 1

    def clear(self) -> list:
        dropped = list(self.entries)
        self.entries.clear()
        self.sample_sum = 0.0
        self.sample_count = 0
        return dropped


class MessageKind(str, Enum):
    HANDSHAKE = "Handshake"
    FORWARD_ANT = "ForwardAnt"
    BACKWARD_ANT = "BackwardAnt"
    GOSSIP_DISCOVERY = "GossipDiscovery"
    GOSSIP_RESPONSE = "GossipResponse"
    OFFLOAD = "Offload"
    RESULT = "Result"
    SA_NOTICE = "SANotice"
    DISCONNECT = "Disconnect"


CONTROL_KINDS = frozenset(
    {MessageKind.HANDSHAKE, MessageKind.SA_NOTICE, MessageKind.DISCONNECT}
)


@dataclass(frozen=True)
class MessageEnvelope:
    msg_id: str
    kind: MessageKind
    sender: str
    receiver: str
    payload: dict[str, Any]
    sent_at_ms: int

    def to_wire(self) -> dict[str, Any]:
        return {
            "msg_id": self.msg_id,
            "kind": self.kind.value,
            "sender": self.sender,
            "receiver": self.receiver,
            "sent_at_ms": self.sent_at_ms,
            "payload": self.payload,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_wire(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_wire(cls, d: dict[str, Any]) -> "MessageEnvelope":
        return cls(
            str(d["msg_id"]), MessageKind(d["kind"]), str(d["sender"]),
            str(d["receiver"]), dict(d["payload"]), int(d["sent_at_ms"]),
        )

    @classmethod
    def from_json(cls, line: str) -> "MessageEnvelope":
        return cls.from_wire(json.loads(line))


class IdSource:
    """Monotonic string ids with a fixed prefix, e.g. ``m000001``."""

    def __init__(self, prefix: str):
        self.prefix = prefix
        self._counter = itertools.count(1)

    def __call__(self) -> str:
        return f"{self.prefix}{next(self._counter):06d}"


def read_message_log(lines: Iterable[str]) -> list[MessageEnvelope]:
    return [MessageEnvelope.from_json(line) for line in lines if line.strip()]
