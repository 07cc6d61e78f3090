import json
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarm_offload.core import (
    DEFAULT_PROCESSING_S,
    MessageEnvelope,
    MessageKind,
    QueueState,
    Task,
    TaskType,
    IdSource,
    capacity_factor,
    catalog,
    device_spec,
    effective_processing_ms,
    read_message_log,
    supports,
)

T = TaskType

# Transcribed device table: type, tasks, queue, comm, comp, storage, p_fail, p_recover
DEVICE_TABLE = [
    ("s1", {T.T1, T.T2}, 10, 1, 1, 1, 0.1, 0.4),
    ("s2", {T.T3, T.T4, T.T5}, 15, 1, 2, 1, 0.1, 0.4),
    ("m1", {T.T1, T.T4}, 10, 1, 2, 2, 0.2, 0.3),
    ("m2", {T.T5}, 5, 2, 2, 2, 0.2, 0.3),
    ("m3", {T.T2, T.T3}, 10, 2, 2, 3, 0.2, 0.3),
    ("w1", {T.T1}, 5, 3, 3, 3, 0.3, 0.2),
    ("w2", {T.T2}, 5, 3, 2, 3, 0.3, 0.2),
    ("w3", {T.T3}, 5, 3, 3, 3, 0.3, 0.2),
    ("w4", {T.T4}, 5, 3, 3, 3, 0.3, 0.2),
    ("w5", {T.T5}, 5, 2, 3, 3, 0.3, 0.2),
]


@pytest.mark.parametrize("row", DEVICE_TABLE, ids=[r[0] for r in DEVICE_TABLE])
def test_catalog_matches_device_table(row):
    type_id, tasks, queue, comm, comp, storage, p_fail, p_recover = row
    spec = device_spec(type_id)
    assert spec.supported_types == frozenset(tasks)
    assert (spec.queue_limit, spec.c_comm, spec.c_comp, spec.c_storage) == (queue, comm, comp, storage)
    assert (spec.p_fail, spec.p_recover) == (p_fail, p_recover)


def test_catalog_lookups():
    m2 = device_spec("m2")
    assert m2.queue_limit == 5
    assert (m2.c_comm, m2.c_comp, m2.c_storage) == (2, 2, 2)
    assert (m2.p_fail, m2.p_recover) == (0.2, 0.3)
    s2 = device_spec("s2")
    assert s2.queue_limit == 15 and s2.supported_types == {T.T3, T.T4, T.T5}
    assert len(catalog()) == 10


def test_catalog_is_stable():
    first = catalog()
    first.pop()
    assert catalog() == catalog()
    assert len(catalog()) == 10


def test_unknown_device_type():
    with pytest.raises(KeyError):
        device_spec("x9")


@pytest.mark.parametrize("type_id,expected", [("s1", 1.0), ("w1", 3.0), ("m3", 7 / 3)])
def test_capacity_factor(type_id, expected):
    assert capacity_factor(device_spec(type_id)) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("type_id,t,expected", [("s1", T.T1, True), ("w5", T.T1, False),
                                                ("s2", T.T4, True)])
def test_supports(type_id, t, expected):
    assert supports(device_spec(type_id), t) is expected


capacities = st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))


@given(capacities, st.integers(0, 2))
def test_capacity_factor_monotone(caps, which):
    if caps[which] == 3:
        return
    base = replace(device_spec("s1"), c_comm=caps[0], c_comp=caps[1], c_storage=caps[2])
    bumped = list(caps)
    bumped[which] += 1
    more = replace(base, c_comm=bumped[0], c_comp=bumped[1], c_storage=bumped[2])
    assert capacity_factor(more) > capacity_factor(base)


def test_spec_validation():
    with pytest.raises(ValueError):
        replace(device_spec("s1"), c_comm=4)
    with pytest.raises(ValueError):
        replace(device_spec("s1"), p_fail=1.5)
    with pytest.raises(ValueError):
        device_spec("s1").with_queue_limit(0)


def _task(t=T.T1, base_ms=2000):
    return Task("t1", t, "n0", 0, 60_000, base_ms)


def test_processing_time_scales_with_capacity():
    assert effective_processing_ms(_task(), device_spec("s1")) == 2000
    assert effective_processing_ms(_task(), device_spec("w1")) == 6000
    assert DEFAULT_PROCESSING_S[T.T4] > DEFAULT_PROCESSING_S[T.T1]
    assert DEFAULT_PROCESSING_S[T.T5] > DEFAULT_PROCESSING_S[T.T3]


def test_task_roundtrip_and_deadline():
    task = Task("t7", T.T3, "n4", 1500, 60_000, 3000)
    assert Task.from_dict(json.loads(json.dumps(task.to_dict()))) == task
    assert task.deadline_ms == 61_500
    with pytest.raises(ValueError):
        Task("t", T.T1, "n", 0, 0, 1)


def test_queue_state():
    q = QueueState(limit=2)
    assert q.l_avg == 0 and not q.overloaded
    q.entries.extend(["a", "b"])
    assert q.occupation == 2 and q.overloaded
    assert q.l_avg == 2.0
    q.record_sample()
    q.entries.popleft()
    q.record_sample()
    assert q.l_avg == 1.5
    q.entries.extend(["c", "d"])
    assert q.occupation == 3  # may exceed the limit
    assert q.clear() == ["b", "c", "d"]
    assert q.occupation == 0 and q.sample_count == 0


def test_id_source():
    ids = IdSource("r")
    assert [ids(), ids()] == ["r000001", "r000002"]


json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-10**9, 10**9) | st.text(max_size=8)
    | st.floats(allow_nan=False, allow_infinity=False),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=6), inner, max_size=4),
    max_leaves=12,
)


@given(
    msg_id=st.text(min_size=1, max_size=10),
    kind=st.sampled_from(list(MessageKind)),
    sender=st.text(max_size=6),
    receiver=st.text(max_size=6),
    payload=st.dictionaries(st.text(max_size=6), json_values, max_size=5),
    sent=st.integers(0, 2**53),
)
def test_envelope_roundtrip(msg_id, kind, sender, receiver, payload, sent):
    msg = MessageEnvelope(msg_id, kind, sender, receiver, payload, sent)
    assert MessageEnvelope.from_wire(msg.to_wire()) == msg
    assert MessageEnvelope.from_json(msg.to_json()) == msg


def test_wire_schema_fields():
    msg = MessageEnvelope("m1", MessageKind.FORWARD_ANT, "a", "b", {"req": "r1"}, 100)
    wire = json.loads(msg.to_json())
    assert set(wire) == {"msg_id", "kind", "sender", "receiver", "sent_at_ms", "payload"}
    assert wire["kind"] == "ForwardAnt" and isinstance(wire["sent_at_ms"], int)
    assert read_message_log([msg.to_json(), "", msg.to_json()]) == [msg, msg]
