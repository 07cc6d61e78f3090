"""Append-only run ledger and the seven offloading metrics derived from it."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple, Optional


class QueueSample(NamedTuple):
    t_ms: int
    node: str
    occupation: int


class OffloadRequested(NamedTuple):
    t_ms: int
    req: str
    origin: str


class TargetFound(NamedTuple):
    t_ms: int
    req: str
    hops: int


class RequestLost(NamedTuple):
    t_ms: int
    req: str


class ResultReturned(NamedTuple):
    t_ms: int
    req: str


class MessageSent(NamedTuple):
    t_ms: int
    req: Optional[str]
    strategy: str
    sender: str
    kind: str


RECORD_TYPES = (QueueSample, OffloadRequested, TargetFound, RequestLost, ResultReturned, MessageSent)


class LedgerError(ValueError):
    pass


@dataclass
class MetricsLedger:
    strategy: str = ""
    duration_ms: int = 0
    records: list = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    _requests: set = field(default_factory=set, repr=False)
    _last_t: int = field(default=0, repr=False)

    def append(self, record) -> None:
        if record.t_ms < self._last_t:
            raise LedgerError(f"record at {record.t_ms} ms after {self._last_t} ms")
        if isinstance(record, OffloadRequested):
            if record.req in self._requests:
                raise LedgerError(f"duplicate request id {record.req}")
            self._requests.add(record.req)
        self._last_t = record.t_ms
        self.records.append(record)

    def of(self, kind: type) -> list:
        return [r for r in self.records if type(r) is kind]

    def to_jsonl(self) -> str:
        out = io.StringIO()
        for r in self.records:
            out.write(json.dumps([type(r).__name__, *r], separators=(",", ":")))
            out.write("\n")
        return out.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()


METRICS = ("LD", "ST", "HPH", "AM", "MPR", "HMR", "GR")


@dataclass
class Summary:
    LD: Optional[float]
    ST: Optional[float]
    HPH: Optional[float]
    AM: int
    MPR: Optional[float]
    HMR: Optional[float]
    GR: Optional[float]
    requests: int = 0
    hits: int = 0
    misses: int = 0
    returned: int = 0
    attributed_messages: int = 0

    def as_dict(self) -> dict[str, Any]:
        return {
            "LD": self.LD, "ST": self.ST, "HPH": self.HPH, "AM": self.AM, "MPR": self.MPR,
            "HMR": self.HMR, "GR": self.GR, "requests": self.requests, "hits": self.hits,
            "misses": self.misses, "returned": self.returned,
            "attributed_messages": self.attributed_messages,
        }


def _mean(values) -> Optional[float]:
    values = list(values)
    return math.fsum(values) / len(values) if values else None


def compute_summary(ledger: MetricsLedger) -> Summary:
    samples = []
    requested: dict[str, int] = {}
    found: dict[str, int] = {}
    lost: set[str] = set()
    returned: dict[str, int] = {}
    am = 0
    attributed = 0
    for r in ledger.records:
        kind = type(r)
        if kind is MessageSent:
            am += 1
            if r.req is not None:
                attributed += 1
        elif kind is QueueSample:
            samples.append(r.occupation)
        elif kind is OffloadRequested:
            requested[r.req] = r.t_ms
        elif kind is TargetFound:
            found[r.req] = r.hops
        elif kind is RequestLost:
            lost.add(r.req)
        elif kind is ResultReturned:
            returned.setdefault(r.req, r.t_ms)

    n_req = len(requested)
    hits, misses = len(found), len(lost)
    service = [(returned[q] - requested[q]) / 1000 for q in returned if q in requested]
    return Summary(
        LD=_mean(samples),
        ST=_mean(service),
        HPH=_mean(found.values()),
        AM=am,
        MPR=attributed / n_req if n_req else None,
        HMR=100 * hits / (hits + misses) if hits + misses else None,
        GR=100 * len(returned) / n_req if n_req else None,
        requests=n_req,
        hits=hits,
        misses=misses,
        returned=len(returned),
        attributed_messages=attributed,
    )


def timeseries(ledger: MetricsLedger, bucket_seconds: float) -> dict[str, list[tuple[float, float]]]:
    """Per-metric ``(bucket start seconds, value)`` rows.

    LD buckets queue samples and AM buckets messages by their own time; the
    request metrics bucket by the time the request was opened, so that e.g.
    the request-weighted mean of MPR rows equals the run's MPR.
    """
    if bucket_seconds <= 0:
        raise ValueError("bucket_seconds must be positive")
    width = int(round(bucket_seconds * 1000))
    out: dict[str, list[tuple[float, float]]] = {m: [] for m in METRICS}
    if not ledger.records:
        return out

    def bucket(t_ms: int) -> int:
        return t_ms // width

    n_buckets = max(1, -(-ledger.duration_ms // width)) if ledger.duration_ms else 0
    ld: dict[int, list[int]] = {}
    am: dict[int, int] = {}
    req_bucket: dict[str, int] = {}
    req_t: dict[str, int] = {}
    per_req_msgs: dict[str, int] = {}
    found: dict[str, int] = {}
    lost: set[str] = set()
    ret: dict[str, int] = {}
    for r in ledger.records:
        kind = type(r)
        if kind is QueueSample:
            ld.setdefault(bucket(r.t_ms), []).append(r.occupation)
        elif kind is MessageSent:
            am[bucket(r.t_ms)] = am.get(bucket(r.t_ms), 0) + 1
            if r.req is not None:
                per_req_msgs[r.req] = per_req_msgs.get(r.req, 0) + 1
        elif kind is OffloadRequested:
            req_bucket[r.req] = bucket(r.t_ms)
            req_t[r.req] = r.t_ms
        elif kind is TargetFound:
            found[r.req] = r.hops
        elif kind is RequestLost:
            lost.add(r.req)
        elif kind is ResultReturned:
            ret.setdefault(r.req, r.t_ms)

    last = max([n_buckets - 1, *ld, *am, *req_bucket.values()]) if (ld or am or req_bucket) else -1
    groups: dict[int, list[str]] = {}
    for q, b in req_bucket.items():
        groups.setdefault(b, []).append(q)

    for b in range(last + 1):
        t0 = b * width / 1000
        if b in ld:
            out["LD"].append((t0, math.fsum(ld[b]) / len(ld[b])))
        out["AM"].append((t0, float(am.get(b, 0))))
        reqs = groups.get(b)
        if not reqs:
            continue
        out["MPR"].append((t0, sum(per_req_msgs.get(q, 0) for q in reqs) / len(reqs)))
        out["GR"].append((t0, 100 * sum(q in ret for q in reqs) / len(reqs)))
        h = sum(q in found for q in reqs)
        m = sum(q in lost for q in reqs)
        if h + m:
            out["HMR"].append((t0, 100 * h / (h + m)))
        if h:
            out["HPH"].append((t0, sum(found[q] for q in reqs if q in found) / h))
        st = [(ret[q] - req_t[q]) / 1000 for q in reqs if q in ret]
        if st:
            out["ST"].append((t0, math.fsum(st) / len(st)))
    return out


def write_timeseries_csv(rows: list[tuple[float, float]], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "value"])
        for t, v in rows:
            w.writerow([_fmt(t), repr(float(v))])


def export_timeseries(ledger: MetricsLedger, bucket_seconds: float, out_dir: Path,
                      cell: str = "run") -> dict[str, Path]:
    """Write ``<out_dir>/<metric>/<cell>.csv`` for each metric."""
    series = timeseries(ledger, bucket_seconds)
    paths = {}
    for metric in METRICS:
        path = Path(out_dir) / metric / f"{cell}.csv"
        write_timeseries_csv(series[metric], path)
        paths[metric] = path
    return paths


SUMMARY_COLUMNS = ("strategy", "nodes", "queue", "env", "seed",
                   "LD", "ST", "HPH", "AM", "MPR", "HMR", "GR")
ABSENT = "NA"


def _fmt(v) -> str:
    if v is None:
        return ABSENT
    if isinstance(v, float):
        if v.is_integer():
            return str(int(v)) if abs(v) < 1e15 else repr(v)
        return f"{v:.6f}".rstrip("0").rstrip(".")
    return str(v)


def summary_row(summary: Summary, *, strategy: str, nodes: int, queue, env: str,
                seed: int) -> dict[str, Any]:
    row = {"strategy": strategy, "nodes": nodes, "queue": queue, "env": env, "seed": seed}
    row.update({m: getattr(summary, m) for m in METRICS})
    return row


def write_summary_csv(rows: list[dict[str, Any]], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])


def read_summary_csv(path: Path) -> list[dict[str, Any]]:
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row: dict[str, Any] = dict(raw)
            row["nodes"] = int(row["nodes"])
            row["seed"] = int(row["seed"])
            for m in METRICS:
                row[m] = None if row[m] == ABSENT else float(row[m])
            rows.append(row)
    return rows
