"""Discrete-event simulator for decentralized task offloading in device swarms.

Three coordination strategies share one engine: ant-colony routing with
forward and backward ants, a uniform random walk, and a two-phase gossip
flood. Runs are deterministic for a given configuration and seed.
"""

from .core import DeviceSpec, MessageEnvelope, MessageKind, Task, TaskType, catalog, device_spec
from .engine import ConfigError, Engine, RunResult, ScenarioConfig, load_config, run
from .metrics import METRICS, MetricsLedger, Summary, compute_summary

__all__ = [
    "ConfigError", "DeviceSpec", "Engine", "METRICS", "MessageEnvelope", "MessageKind",
    "MetricsLedger", "RunResult", "ScenarioConfig", "Summary", "Task", "TaskType", "catalog",
    "compute_summary", "device_spec", "load_config", "run",
]
__version__ = "0.1.0"
