"""Deterministic discrete-event simulation of an offloading swarm."""

from __future__ import annotations

import heapq
import json
import random
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Optional

from .aco import ACOParams, ACOStrategy, queue_quality, quality_pheromones
from .baselines import GossipStrategy, RandomStrategy
from .core import (
    CONTROL_KINDS,
    DEFAULT_PROCESSING_S,
    DEFAULT_TTL_S,
    TASK_TYPES,
    IdSource,
    MessageEnvelope,
    MessageKind,
    NodeProfile,
    QueueState,
    Task,
    TaskType,
    catalog,
    device_spec,
    effective_processing_ms,
    to_ms,
)
from .metrics import (
    MessageSent,
    MetricsLedger,
    OffloadRequested,
    QueueSample,
    RequestLost,
    ResultReturned,
    Summary,
    TargetFound,
    compute_summary,
)
from .topology import (
    Handshake,
    ScheduleDisconnect,
    SendNotice,
    SwarmGraph,
    TopologyParams,
    build_initial_topology,
    finish_disconnect,
    handshake,
    receive_notice,
    restore_degree,
    self_actualize,
)

STRATEGIES = ("random", "aco", "gossips")
SEARCH_KINDS = frozenset({MessageKind.FORWARD_ANT, MessageKind.GOSSIP_DISCOVERY})
ENVIRONMENTS = ("static", "dynamic")

# mean inter-arrival seconds per node and task type
DEFAULT_EMITTER_RATES: dict[str, float] = {"T1": 25.0, "T2": 50.0, "T3": 25.0, "T4": 150.0, "T5": 150.0}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ScenarioConfig:
    strategy: str = "aco"
    environment: str = "static"
    node_count: int = 25
    duration_s: float = 900.0
    seed: int = 1
    queue_capacity: Optional[int] = None
    device_mix: Optional[dict[str, float]] = None
    emitter_rates: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_EMITTER_RATES))
    processing_s: dict[str, float] = field(
        default_factory=lambda: {t.value: s for t, s in DEFAULT_PROCESSING_S.items()})
    ttl_s: float = DEFAULT_TTL_S
    latency_ms: int = 100
    inspection_ms: int = 8000
    # aco
    alpha: float = 2.0
    beta: float = 1.0
    rho: float = 0.3
    tau0: float = 50.0
    tau0_plus: float = 100.0
    evaporation_interval_s: float = 60.0
    # gossips
    discovery_fraction: float = 0.5
    # topology
    min_connections: int = 2
    max_connections: int = 8
    target_degree: int = 4
    sa_enabled: bool = True
    sa_interval_s: float = 300.0
    sa_links: int = 1
    notice_grace_s: float = 30.0
    block_duration_s: float = 600.0
    # dynamics
    failure_interval_s: float = 900.0
    recovery_interval_s: float = 60.0
    # instrumentation
    sample_interval_s: float = 10.0
    bucket_s: float = 60.0
    count_control_messages: bool = False
    log_messages: bool = False
    topology_snapshot_s: float = 0.0
    drain: bool = True
    drain_limit_s: float = 3600.0

    def validate(self) -> "ScenarioConfig":
        if self.strategy not in STRATEGIES:
            raise ConfigError("strategy", f"must be one of {STRATEGIES}")
        if self.environment not in ENVIRONMENTS:
            raise ConfigError("environment", f"must be one of {ENVIRONMENTS}")
        if not isinstance(self.node_count, int) or self.node_count < 2:
            raise ConfigError("node_count", "must be an integer >= 2")
        for name in ("duration_s", "ttl_s", "sample_interval_s", "bucket_s", "sa_interval_s",
                     "failure_interval_s", "recovery_interval_s", "evaporation_interval_s"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")
        for name in ("latency_ms", "inspection_ms", "notice_grace_s", "block_duration_s", "topology_snapshot_s",
                     "drain_limit_s"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be non-negative")
        if self.queue_capacity is not None and (not isinstance(self.queue_capacity, int)
                                                or self.queue_capacity <= 0):
            raise ConfigError("queue_capacity", "must be a positive integer or null")
        if set(self.emitter_rates) != {t.value for t in TASK_TYPES}:
            raise ConfigError("emitter_rates", "needs exactly one entry per task type T1..T5")
        if any(not v > 0 for v in self.emitter_rates.values()):
            raise ConfigError("emitter_rates", "mean inter-arrival times must be positive")
        if set(self.processing_s) != {t.value for t in TASK_TYPES}:
            raise ConfigError("processing_s", "needs exactly one entry per task type T1..T5")
        if any(not v > 0 for v in self.processing_s.values()):
            raise ConfigError("processing_s", "processing times must be positive")
        if self.device_mix is not None:
            known = {s.type_id for s in catalog()}
            if not set(self.device_mix) <= known:
                raise ConfigError("device_mix", f"unknown device types {set(self.device_mix) - known}")
            if any(v < 0 for v in self.device_mix.values()) or sum(self.device_mix.values()) <= 0:
                raise ConfigError("device_mix", "weights must be non-negative with a positive sum")
        try:
            self.aco_params()
        except ValueError as exc:
            raise ConfigError("aco", str(exc)) from None
        try:
            self.topology_params()
        except ValueError as exc:
            raise ConfigError("topology", str(exc)) from None
        if not 0 < self.discovery_fraction < 1:
            raise ConfigError("discovery_fraction", "must be in (0, 1)")
        return self

    def aco_params(self) -> ACOParams:
        return ACOParams(self.alpha, self.beta, self.rho, self.tau0, self.tau0_plus,
                         self.evaporation_interval_s)

    def topology_params(self) -> TopologyParams:
        return TopologyParams(self.min_connections, self.max_connections, self.target_degree,
                              self.sa_enabled, self.sa_interval_s, self.sa_links,
                              self.notice_grace_s, self.block_duration_s)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "ScenarioConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        cfg = cls(**data)
        for name in ("duration_s", "ttl_s", "alpha", "beta", "rho", "tau0", "tau0_plus"):
            value = getattr(cfg, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(name, "must be a number")
        return cfg.validate()

    def cell_name(self) -> str:
        queue = self.queue_capacity if self.queue_capacity is not None else "table"
        return f"{self.strategy}-n{self.node_count}-q{queue}-{self.environment}-s{self.seed}"


def _parse_value(raw: str) -> Any:
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config_text(text: str) -> dict[str, Any]:
    """``key = value`` lines (values parsed as JSON when possible) or one JSON object."""
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError("config", "JSON config must be an object")
        return data
    data: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = line.split("=", 1)
        data[key.strip()] = _parse_value(value)
    return data


def load_config(path: Path, **overrides: Any) -> ScenarioConfig:
    data = parse_config_text(Path(path).read_text())
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioConfig.from_mapping(data)


# --- runtime -------------------------------------------------------------------


@dataclass
class RemoteJob:
    req: str
    route: list[str]
    quality: float


@dataclass
class NodeRuntime:
    profile: NodeProfile
    queue: QueueState
    alive: bool = True
    incarnation: int = 0
    busy: bool = False
    remote: dict[str, RemoteJob] = field(default_factory=dict)

    @property
    def node_id(self) -> str:
        return self.profile.node_id


@dataclass
class RequestState:
    origin: str
    incarnation: int
    outcome: Optional[str] = None
    returned: bool = False


def failure_tick(nodes, rng: random.Random) -> list[str]:
    """Bernoulli failure draw for each alive node, with its device's p_fail."""
    failed = []
    for node in nodes:
        if node.alive and rng.random() < node.profile.spec.p_fail:
            failed.append(node.node_id)
    return failed


def recovery_tick(nodes, rng: random.Random) -> list[str]:
    recovered = []
    for node in nodes:
        if not node.alive and rng.random() < node.profile.spec.p_recover:
            recovered.append(node.node_id)
    return recovered


def draw_task_type(rates: dict[str, float], rng: random.Random) -> TaskType:
    types = list(TASK_TYPES)
    return rng.choices(types, weights=[1.0 / rates[t.value] for t in types])[0]


def assign_device_types(node_count: int, mix: Optional[dict[str, float]], rng: random.Random) -> list[str]:
    """Largest-remainder apportionment of the mix, shuffled."""
    ids = [s.type_id for s in catalog()]
    weights = {t: 1.0 for t in ids} if mix is None else {t: float(mix.get(t, 0.0)) for t in ids}
    total = sum(weights.values())
    quotas = {t: node_count * w / total for t, w in weights.items()}
    counts = {t: int(q) for t, q in quotas.items()}
    short = node_count - sum(counts.values())
    # equal remainders are broken at random so no device class is favoured
    tiebreak = {t: rng.random() for t in ids}
    for t in sorted(ids, key=lambda t: (-(quotas[t] - counts[t]), tiebreak[t]))[:short]:
        counts[t] += 1
    assigned = [t for t in ids for _ in range(counts[t])]
    rng.shuffle(assigned)
    return assigned


def _phase(node_id: str, period_ms: int) -> int:
    return zlib.crc32(node_id.encode()) % max(period_ms, 1)


@dataclass
class RunResult:
    config: ScenarioConfig
    ledger: MetricsLedger
    summary: Summary
    counters: dict[str, int]
    conservation: dict[str, int]
    pheromones: dict[str, str] = field(default_factory=dict)
    topology_snapshots: list[tuple[float, str]] = field(default_factory=list)
    message_log: list[str] = field(default_factory=list)
    final_edges: list[tuple[str, str]] = field(default_factory=list)


class Engine:
    """Single-threaded event loop. Events fire in (time, sequence) order."""

    def __init__(self, config: ScenarioConfig, strategy=None):
        self.config = config.validate()
        c = config
        seed = c.seed
        self.topo_rng = random.Random(f"{seed}:topology")
        self.emit_rng = random.Random(f"{seed}:emit")
        self.strategy_rng = random.Random(f"{seed}:strategy")
        self.failure_rng = random.Random(f"{seed}:failure")
        self.now = 0
        self.duration_ms = to_ms(c.duration_s)
        self.latency_ms = int(c.latency_ms)
        self.inspection_ms = int(c.inspection_ms)
        # one search hop: link latency plus the receiver inspecting its queue
        self.hop_ms = self.latency_ms + self.inspection_ms
        self.ttl_ms = to_ms(c.ttl_s)
        self.processing_ms = {TaskType(k): to_ms(v) for k, v in c.processing_s.items()}
        self.topo = c.topology_params()
        self._heap: list = []
        self._seq = 0
        self._work = 0

        self.nodes: dict[str, NodeRuntime] = {}
        self.profiles: dict[str, NodeProfile] = {}
        types = assign_device_types(c.node_count, c.device_mix, self.topo_rng)
        for i, type_id in enumerate(types):
            spec = device_spec(type_id)
            if c.queue_capacity is not None:
                spec = spec.with_queue_limit(c.queue_capacity)
            nid = f"n{i:03d}"
            prof = NodeProfile(nid, spec, f"sim://{nid}", c.max_connections)
            self.profiles[nid] = prof
            self.nodes[nid] = NodeRuntime(prof, QueueState(spec.queue_limit))
        self.specs = {nid: p.spec for nid, p in self.profiles.items()}

        self.strategy = strategy if strategy is not None else self._make_strategy()
        self.graph: SwarmGraph = build_initial_topology(
            list(self.profiles.values()), c.target_degree, self.topo_rng)
        for a, b in self.graph.edges():
            self._on_connect(a, b)
            self._on_connect(b, a)

        self.ledger = MetricsLedger(self.strategy.name, self.duration_ms)
        self.requests: dict[str, RequestState] = {}
        self._msg_ids = IdSource("m")
        self._task_ids = IdSource("t")
        self._req_ids = IdSource("r")
        self.counters = {
            "emitted": 0, "completed_local": 0, "completed_remote": 0, "lost": 0,
            "strategy_messages": 0, "control_messages": 0, "dropped_messages": 0,
            "silence_violations": 0, "failures": 0, "recoveries": 0,
            "handshakes": 0, "sa_disconnects": 0, "fallback_local": 0,
        }
        self.message_log: list[str] = []
        self.snapshots: list[tuple[float, str]] = []
        self.dead_since: dict[str, int] = {}
        self.silent_windows: list[tuple[str, int, int]] = []
        self._schedule_initial()

    def _make_strategy(self):
        c = self.config
        if c.strategy == "aco":
            return ACOStrategy(c.aco_params())
        if c.strategy == "gossips":
            return GossipStrategy(c.discovery_fraction)
        return RandomStrategy()

    # --- event plumbing ---------------------------------------------------------

    def _push(self, at_ms: int, fn: Callable, args: tuple, work: bool) -> None:
        if at_ms < self.now:
            raise RuntimeError("cannot schedule an event in the past")
        self._seq += 1
        if work:
            self._work += 1
        heapq.heappush(self._heap, (at_ms, self._seq, work, fn, args))

    def schedule(self, at_ms: int, fn: Callable, *args) -> None:
        """Schedule a one-shot callback that belongs to in-flight work."""
        self._push(max(at_ms, self.now), fn, args, True)

    def _periodic(self, at_ms: int, fn: Callable, *args) -> None:
        self._push(at_ms, fn, args, False)

    @property
    def in_window(self) -> bool:
        return self.now < self.duration_ms

    def _schedule_initial(self) -> None:
        c = self.config
        for nid in self.nodes:
            self._periodic(self._next_arrival(0), self._emit, nid)
            evap = to_ms(c.evaporation_interval_s)
            self._periodic(_phase(nid, evap) or evap, self._evaporate, nid)
            if self.topo.sa_enabled:
                sa = to_ms(self.topo.sa_interval_s)
                self._periodic(_phase(nid, sa) or sa, self._sa_tick, nid)
            if c.environment == "dynamic":
                fail = to_ms(c.failure_interval_s)
                self._periodic(1 + int(self.failure_rng.random() * (fail - 1)), self._fail_check, nid)
        if c.environment == "dynamic":
            self._periodic(to_ms(c.recovery_interval_s), self._recovery_tick)
        self._periodic(0, self._sample)
        if c.topology_snapshot_s > 0:
            self._periodic(0, self._snapshot)

    def run(self) -> RunResult:
        c = self.config
        stop_at = self.duration_ms + (to_ms(c.drain_limit_s) if c.drain else 0)
        while self._heap:
            at, _, work, fn, args = self._heap[0]
            if at >= self.duration_ms and (self._work == 0 or not c.drain):
                break
            if at > stop_at:
                break
            heapq.heappop(self._heap)
            if work:
                self._work -= 1
            self.now = at
            fn(*args)
        self.now = max(self.now, min(stop_at, self.duration_ms))
        return self._finish()

    def _finish(self) -> RunResult:
        pending = sum(n.queue.occupation for n in self.nodes.values())
        held = self.counters["emitted"] - (self.counters["completed_local"]
                                           + self.counters["completed_remote"]
                                           + self.counters["lost"])
        conservation = {
            "emitted": self.counters["emitted"],
            "completed_local": self.counters["completed_local"],
            "completed_remote": self.counters["completed_remote"],
            "lost": self.counters["lost"],
            "pending": held,
            "queued_at_end": pending,
            "requests": len(self.requests),
            "hits": sum(r.outcome == "hit" for r in self.requests.values()),
            "misses": sum(r.outcome == "miss" for r in self.requests.values()),
            "unresolved": sum(r.outcome is None for r in self.requests.values()),
        }
        for nid, since in self.dead_since.items():
            self.silent_windows.append((nid, since, self.now))
        self.dead_since = {}
        pher = {}
        if isinstance(self.strategy, ACOStrategy):
            pher = {nid: self.strategy.table(nid).to_csv() for nid in sorted(self.nodes)}
        return RunResult(
            config=self.config,
            ledger=self.ledger,
            summary=compute_summary(self.ledger),
            counters=dict(self.counters),
            conservation=conservation,
            pheromones=pher,
            topology_snapshots=list(self.snapshots),
            message_log=list(self.message_log),
            final_edges=self.graph.edges(),
        )

    # --- messaging --------------------------------------------------------------

    def send(self, kind: MessageKind, sender: str, receiver: str, payload: dict,
             req: Optional[str] = None, search: bool = False) -> MessageEnvelope:
        """``search`` marks a hop that makes the receiver inspect its queue."""
        if not self.nodes[sender].alive:
            self.counters["silence_violations"] += 1
        msg = MessageEnvelope(self._msg_ids(), kind, sender, receiver, payload, self.now)
        self._account(msg, req)
        delay = self.hop_ms if search or kind in SEARCH_KINDS else self.latency_ms
        self.schedule(self.now + delay, self._deliver, msg)
        return msg

    def _account(self, msg: MessageEnvelope, req: Optional[str]) -> None:
        control = msg.kind in CONTROL_KINDS
        if control:
            self.counters["control_messages"] += 1
        if not control or self.config.count_control_messages:
            if not control:
                self.counters["strategy_messages"] += 1
            self.ledger.append(MessageSent(self.now, req, self.strategy.name, msg.sender,
                                           msg.kind.value))
        if self.config.log_messages:
            self.message_log.append(msg.to_json())

    def _note_control(self, kind: MessageKind, sender: str, receiver: str, payload: dict) -> None:
        """Record a control message whose effect is applied synchronously."""
        msg = MessageEnvelope(self._msg_ids(), kind, sender, receiver, payload, self.now)
        self._account(msg, None)

    def _deliver(self, msg: MessageEnvelope) -> None:
        receiver = self.nodes.get(msg.receiver)
        if receiver is None:
            self.ledger.errors.append(f"{self.now}: unknown receiver {msg.receiver}")
            return
        if not receiver.alive:
            self.counters["dropped_messages"] += 1
            if msg.kind not in CONTROL_KINDS:
                self.strategy.on_drop(self, msg)
            return
        if msg.kind is MessageKind.SA_NOTICE:
            receive_notice(self.graph, msg.receiver, msg.sender)
        elif msg.kind in CONTROL_KINDS:
            pass
        else:
            self.strategy.on_message(self, msg)

    # --- task lifecycle ---------------------------------------------------------

    def _next_arrival(self, now: int) -> int:
        rates = self.config.emitter_rates
        total = sum(1.0 / v for v in rates.values())
        return now + int(round(self.emit_rng.expovariate(total) * 1000))

    def _emit(self, nid: str) -> None:
        if not self.in_window:
            return
        self._periodic(self._next_arrival(self.now), self._emit, nid)
        node = self.nodes[nid]
        ttype = draw_task_type(self.config.emitter_rates, self.emit_rng)
        if not node.alive:
            return
        task = Task(self._task_ids(), ttype, nid, self.now, self.ttl_ms, self.processing_ms[ttype])
        self.counters["emitted"] += 1
        if not node.queue.overloaded:
            self._enqueue(node, task)
            return
        self.offload(nid, task)

    def offload(self, origin: str, task: Task | TaskType) -> str:
        """Open an offload request for ``task`` at ``origin``; returns its id.

        Passing a bare task type builds a fresh task emitted now. Scripted
        tests use this to drive the strategies without emitters.
        """
        node = self.nodes[origin]
        if isinstance(task, TaskType):
            task = Task(self._task_ids(), task, origin, self.now, self.ttl_ms,
                        self.processing_ms[task])
            self.counters["emitted"] += 1
        req = self._req_ids()
        self.requests[req] = RequestState(origin, node.incarnation)
        self.ledger.append(OffloadRequested(self.now, req, origin))
        self.strategy.start_offload(self, origin, task, req)
        return req

    def _enqueue(self, node: NodeRuntime, task: Task) -> None:
        node.queue.entries.append(task)
        if not node.busy:
            self._start_service(node)

    def _start_service(self, node: NodeRuntime) -> None:
        if not node.queue.entries:
            node.busy = False
            return
        node.busy = True
        head = node.queue.entries[0]
        service = effective_processing_ms(head, node.profile.spec)
        self.schedule(self.now + service, self._process_done, node.node_id, node.incarnation,
                      head.task_id)

    def _process_done(self, nid: str, incarnation: int, task_id: str) -> None:
        node = self.nodes[nid]
        if not node.alive or node.incarnation != incarnation:
            return
        task = node.queue.entries.popleft()
        assert task.task_id == task_id
        job = node.remote.pop(task_id, None)
        if job is None:
            self.counters["completed_local"] += 1
        else:
            self.counters["completed_remote"] += 1
            self.strategy.on_remote_complete(self, nid, job.req, task, job.route, job.quality)
        self._start_service(node)

    def _resolve(self, req: str, outcome: str) -> bool:
        state = self.requests[req]
        if state.outcome is not None:
            return False
        state.outcome = outcome
        return True

    def accept_remote(self, target: str, task: Task, req: str, hops: int, route: list[str]) -> None:
        node = self.nodes[target]
        if not self._resolve(req, "hit"):
            raise RuntimeError(f"request {req} accepted after resolution")
        self.ledger.append(TargetFound(self.now, req, hops))
        spec = node.profile.spec
        quality = quality_pheromones(queue_quality(node.queue.l_avg, node.queue.limit), spec)
        node.remote[task.task_id] = RemoteJob(req, list(route), quality)
        self._enqueue(node, task)

    def request_expired(self, req: str, task: Task) -> None:
        """No target found in time: the origin runs the task itself."""
        if self._resolve(req, "miss"):
            self.ledger.append(RequestLost(self.now, req))
        state = self.requests[req]
        origin = self.nodes[state.origin]
        if origin.alive and origin.incarnation == state.incarnation:
            self.counters["fallback_local"] += 1
            self._enqueue(origin, task)
        else:
            self.counters["lost"] += 1

    def request_lost_in_flight(self, req: str, task: Task) -> None:
        if self._resolve(req, "miss"):
            self.ledger.append(RequestLost(self.now, req))
        self.counters["lost"] += 1

    def result_returned(self, req: str, at: str) -> None:
        state = self.requests[req]
        node = self.nodes[at]
        if state.origin != at or state.outcome != "hit" or state.returned:
            return
        if node.incarnation != state.incarnation:
            return
        state.returned = True
        self.ledger.append(ResultReturned(self.now, req))

    # --- periodic activity ------------------------------------------------------

    def _sample(self) -> None:
        if not self.in_window:
            return
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if node.alive:
                node.queue.record_sample()
                self.ledger.append(QueueSample(self.now, nid, node.queue.occupation))
        self._periodic(self.now + to_ms(self.config.sample_interval_s), self._sample)

    def _snapshot(self) -> None:
        if not self.in_window:
            return
        self.snapshots.append((self.now / 1000, self.graph.edge_list_text()))
        self._periodic(self.now + to_ms(self.config.topology_snapshot_s), self._snapshot)

    def _evaporate(self, nid: str) -> None:
        if self.nodes[nid].alive:
            self.strategy.evaporate(self, nid)
        if self.in_window or self._work:
            self._periodic(self.now + to_ms(self.config.evaporation_interval_s), self._evaporate, nid)

    def _on_connect(self, a: str, b: str) -> None:
        self.strategy.on_connect(self, a, b)

    def _handshake_hook(self, a: str, b: str) -> None:
        # fired once per direction by handshake()
        self._on_connect(a, b)
        if a < b:
            self.counters["handshakes"] += 1
            self._note_control(MessageKind.HANDSHAKE, a, b, {"profile": self.profiles[a].to_dict()})
            self._note_control(MessageKind.HANDSHAKE, b, a, {"profile": self.profiles[b].to_dict()})

    def _eligible(self, nid: str) -> bool:
        return self.nodes[nid].alive

    def _restore(self, nid: str, goal: int) -> None:
        if self.nodes[nid].alive:
            restore_degree(self.graph, nid, goal, self.topo_rng, self.now, self._eligible,
                           self._handshake_hook)

    def _drop_edge_state(self, a: str, b: str) -> None:
        self.strategy.on_disconnect(self, a, b)
        self.strategy.on_disconnect(self, b, a)

    def _sa_tick(self, nid: str) -> None:
        if not self.in_window:
            return
        self._periodic(self.now + to_ms(self.topo.sa_interval_s), self._sa_tick, nid)
        if not self.nodes[nid].alive:
            return
        view = self.strategy.attractiveness(self, nid)
        for action in self_actualize(nid, self.graph, view, self.now, self.topo):
            if isinstance(action, SendNotice):
                self.send(MessageKind.SA_NOTICE, nid, action.peer, {"reason": "self-actualization"})
            elif isinstance(action, ScheduleDisconnect):
                self.schedule(action.at_ms, self._sa_disconnect, nid, action.peer)

    def _sa_disconnect(self, nid: str, peer: str) -> None:
        if not self.nodes[nid].alive:
            return
        before = self.graph.degree(nid)
        if not finish_disconnect(self.graph, nid, peer, self.now, self.topo):
            return
        self.counters["sa_disconnects"] += 1
        self._note_control(MessageKind.DISCONNECT, nid, peer, {})
        self._drop_edge_state(nid, peer)
        self._restore(nid, before)
        if self.graph.degree(peer) < self.topo.min_connections:
            self._restore(peer, self.topo.min_connections)

    def _fail_check(self, nid: str) -> None:
        if not self.in_window:
            return
        self._periodic(self.now + to_ms(self.config.failure_interval_s), self._fail_check, nid)
        for failed in failure_tick([self.nodes[nid]], self.failure_rng):
            self._fail(failed)

    def _fail(self, nid: str) -> None:
        node = self.nodes[nid]
        node.alive = False
        node.incarnation += 1
        node.busy = False
        self.counters["failures"] += 1
        self.dead_since[nid] = self.now
        self.counters["lost"] += len(node.queue.clear())
        node.remote.clear()
        for req, _task in self.strategy.reset_node(self, nid):
            self.request_lost_in_flight(req, _task)
        former = self.graph.isolate(nid)
        for other in former:
            self._drop_edge_state(nid, other)
        for other in former:
            if self.graph.degree(other) < self.topo.min_connections:
                self._restore(other, self.topo.min_connections)

    def _recovery_tick(self) -> None:
        if not self.in_window:
            return
        self._periodic(self.now + to_ms(self.config.recovery_interval_s), self._recovery_tick)
        dead = [self.nodes[n] for n in sorted(self.nodes) if not self.nodes[n].alive]
        for nid in recovery_tick(dead, self.failure_rng):
            self._recover(nid)

    def _recover(self, nid: str) -> None:
        node = self.nodes[nid]
        node.alive = True
        self.counters["recoveries"] += 1
        self.silent_windows.append((nid, self.dead_since.pop(nid), self.now))
        self.strategy.reset_node(self, nid)
        self._restore(nid, self.topo.target_degree)


def run(config: ScenarioConfig) -> RunResult:
    return Engine(config).run()
