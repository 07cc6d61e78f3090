import random

import networkx as nx
import pytest
from scipy.stats import chisquare

from conftest import scripted_engine
from swarm_offload.aco import Accept, Expire, Hop
from swarm_offload.baselines import (
    GossipDiscoveryMsg,
    GossipResponseMsg,
    GossipSeenSet,
    gossip_handle_discovery,
    gossip_offload,
    gossip_rank,
    gossip_score,
    gossip_spread,
    random_offload_step,
)
from swarm_offload.core import Task, TaskType, device_spec
from swarm_offload.metrics import MessageSent

T = TaskType


def _task(t=T.T1):
    return Task("t1", t, "o", 0, 60_000, 2000)


def _rstep(here_type, neighbors, ttl=10_000, occupation=0, rng=None, sender=None, at_origin=False):
    spec = device_spec(here_type)
    return random_offload_step(_task(), "x", ttl, rng or random.Random(0), here_spec=spec,
                               here_overloaded=occupation >= spec.queue_limit,
                               neighbors=neighbors, sender=sender, at_origin=at_origin)


def test_random_step_uniform_chi_square():
    rng = random.Random(2024)
    nbrs = ["a", "b", "c", "d"]
    counts = dict.fromkeys(nbrs, 0)
    for _ in range(10_000):
        counts[_rstep("w2", nbrs, rng=rng).next] += 1
    stat = chisquare([counts[n] for n in nbrs])
    assert stat.pvalue > 0.01


def test_random_step_excludes_sender_unless_alone():
    rng = random.Random(1)
    assert {_rstep("w2", ["a", "b"], rng=rng, sender="a").next for _ in range(50)} == {"b"}
    assert _rstep("w2", ["a"], sender="a").next == "a"


def test_random_step_guards():
    assert isinstance(_rstep("w1", ["a"]), Accept)
    assert isinstance(_rstep("w1", ["a"], occupation=5), Hop)
    assert isinstance(_rstep("w1", ["a"], at_origin=True), Hop)
    assert isinstance(_rstep("w2", ["a"], ttl=0), Expire)


def test_gossip_spread_fanout():
    assert len(gossip_spread("o", _task(), 30_000, ["a", "b", "c", "d"], "g1")) == 4
    assert gossip_spread("o", _task(), 30_000, [], "g1") == []


def _disc(path=("o",), deadline=30_000, gid="g1", t=T.T1):
    return GossipDiscoveryMsg(gid, t, "o", list(path), deadline)


def test_discovery_capable_node_responds_and_forwards():
    # five-node fixture: o - x, x linked to a, b, c
    seen = GossipSeenSet()
    out = gossip_handle_discovery("x", _disc(), seen, 100, spec=device_spec("s1"), occupation=2,
                                  queue_limit=10, neighbors=["a", "b", "c", "o"], sender="o")
    assert out.response is not None and out.response.path == ["o", "x"]
    assert out.response.cursor == 0
    assert [n for n, _ in out.forwards] == ["a", "b", "c"]
    assert all(m.path == ["o", "x"] for _, m in out.forwards)


def test_discovery_duplicate_and_late_copies_drop():
    seen = GossipSeenSet()
    kw = dict(spec=device_spec("s1"), occupation=0, queue_limit=10, neighbors=["a", "o"], sender="o")
    assert not gossip_handle_discovery("x", _disc(), seen, 100, **kw).dropped
    again = gossip_handle_discovery("x", _disc(), seen, 200, **kw)
    assert again.dropped and again.forwards == [] and again.response is None
    late = gossip_handle_discovery("y", _disc(deadline=50), GossipSeenSet(), 51, **kw)
    assert late.dropped


def test_discovery_incapable_or_full_only_forwards():
    kw = dict(queue_limit=5, neighbors=["a", "o"], sender="o")
    out = gossip_handle_discovery("x", _disc(), GossipSeenSet(), 0, spec=device_spec("w5"),
                                  occupation=0, **kw)
    assert out.response is None and len(out.forwards) == 1
    full = gossip_handle_discovery("x", _disc(), GossipSeenSet(), 0, spec=device_spec("w1"),
                                   occupation=5, **kw)
    assert full.response is None


def _resp(node, type_id, hops, occupation=0):
    spec = device_spec(type_id)
    path = ["o"] + [f"h{i}" for i in range(hops - 1)] + [node]
    return GossipResponseMsg("g", node, occupation, spec.queue_limit,
                             (spec.c_comm, spec.c_comp, spec.c_storage), path)


def test_rank_prefers_better_hardware():
    s1, w1 = _resp("s", "s1", 1), _resp("w", "w1", 1)
    assert gossip_score(s1) == pytest.approx(1.0, abs=1e-12)
    assert gossip_score(w1) == pytest.approx(1 / 3, abs=1e-12)
    assert [r.responder for r in gossip_rank([w1, s1])] == ["s", "w"]


def test_rank_discounts_path_length():
    near, far = _resp("b", "m1", 1), _resp("a", "m1", 3)
    assert gossip_score(near) / gossip_score(far) == pytest.approx(3.0, abs=1e-12)
    assert [r.responder for r in gossip_rank([far, near])] == ["b", "a"]


def test_rank_total_order():
    rs = [_resp(n, "w1", 2) for n in "dbca"]
    assert [r.responder for r in gossip_rank(rs)] == ["a", "b", "c", "d"]
    assert gossip_rank(rs) == gossip_rank(list(reversed(rs)))
    assert gossip_rank([]) == []


def test_offload_outcomes():
    ranked = gossip_rank([_resp("s", "s1", 1), _resp("w", "w1", 1)])
    top = gossip_offload(ranked, lambda r: True)
    assert top.hit and top.target == "s" and top.attempts == 1
    assert ranked[0].hops == 1
    second = gossip_offload(ranked, lambda r: r.responder == "w")
    assert second.target == "w" and second.attempts == 2
    none = gossip_offload(ranked, lambda r: False)
    assert not none.hit and none.attempts == 2


def _messages(eng, req=None):
    return [r for r in eng.ledger.records if isinstance(r, MessageSent)
            and (req is None or r.req == req)]


def test_star_fixture_spread_counts_degree():
    eng = scripted_engine("gossips", ["w5", "w1", "w2", "w3", "w4"], [(0, i) for i in range(1, 5)])
    eng.offload("n000", T.T1)
    assert len(_messages(eng)) == 4
    assert {m.kind for m in _messages(eng)} == {"GossipDiscovery"}


def test_isolated_origin_executes_locally():
    eng = scripted_engine("gossips", ["w1", "w2"], [])
    req = eng.offload("n000", T.T1)
    assert eng.requests[req].outcome == "miss"
    assert eng.nodes["n000"].queue.occupation == 1
    assert _messages(eng) == []


def test_gossip_top_accepts_engine():
    eng = scripted_engine("gossips", ["w5", "s1", "w1"], [(0, 1), (0, 2)])
    req = eng.offload("n000", T.T1)
    res = eng.run()
    assert res.summary.hits == 1 and res.summary.HPH == 1
    assert eng.nodes["n001"].queue.occupation == 0 and res.counters["completed_remote"] == 1
    kinds = [m.kind for m in _messages(eng, req)]
    assert kinds.count("Offload") == 1 and kinds.count("GossipResponse") == 2


def test_gossip_reject_then_second_accepts():
    eng = scripted_engine("gossips", ["w5", "s1", "w1"], [(0, 1), (0, 2)])
    req = eng.offload("n000", T.T1)
    filler = [Task(f"f{i}", T.T2, "n001", 0, 60_000, 1) for i in range(10)]

    def congest():
        eng.nodes["n001"].queue.entries.extend(filler)

    # the s1 node fills up after it answered but before the offload arrives
    eng.schedule(30_050, congest)
    res = eng.run()
    assert res.summary.hits == 1 and res.summary.returned == 1
    kinds = [m.kind for m in _messages(eng, req)]
    assert kinds.count("Offload") == 2
    assert kinds.count("Result") == 2  # one rejection, one completion
    assert res.counters["completed_remote"] == 1


def test_gossip_all_targets_gone_is_miss():
    eng = scripted_engine("gossips", ["w5", "s1", "w1"], [(0, 1), (0, 2)])
    req = eng.offload("n000", T.T1)

    def kill_both():
        for nid in ("n001", "n002"):
            eng._fail(nid)

    eng.schedule(30_010, kill_both)
    res = eng.run()
    assert eng.requests[req].outcome == "miss"
    assert res.counters["completed_local"] == 1


def test_gossip_single_forward_per_id_on_dense_graph():
    g = nx.complete_graph(7)
    eng = scripted_engine("gossips", ["w5", "s1", "w1", "m1", "w2", "s2", "m3"], list(g.edges()))
    eng.offload("n000", T.T1)
    eng.run()
    # a second forwarding round would push some node past its degree
    for (node, _gid), sent in eng.strategy.forwarded.items():
        assert sent <= eng.graph.degree(node)
    # each node forwards its single copy to its neighbors except the sender
    assert eng.strategy.forwarded[("n000", "g-r000001")] == 6
    assert all(eng.strategy.forwarded[(f"n00{i}", "g-r000001")] == 5 for i in range(1, 7))


@pytest.mark.parametrize("seed", range(4))
def test_flooding_costs_more_than_a_walk(seed):
    g = nx.random_regular_graph(3, 12, seed=seed)
    types = ["w5", "s1", "w1", "m1", "w2", "s2", "m3", "w3", "w4", "m2", "m1", "w1"]
    per_req = {}
    for strategy in ("random", "gossips"):
        eng = scripted_engine(strategy, types, list(g.edges()), seed=seed)
        for k in range(10):
            eng.schedule(k * 70_000, eng.offload, "n000", T.T1)
        res = eng.run()
        per_req[strategy] = res.summary.MPR
    assert per_req["gossips"] >= per_req["random"]


def test_seen_set_purge():
    seen = GossipSeenSet()
    seen.mark("a", 10)
    seen.mark("b", 20)
    seen.purge(15)
    assert "a" not in seen and "b" in seen


def test_restarted_node_does_not_relay_twice():
    eng = scripted_engine("gossips", ["w5", "s1", "w1"], [(0, 1), (1, 2)])
    eng.offload("n000", T.T1)
    eng.schedule(9_000, eng._fail, "n001")
    eng.schedule(9_500, eng._recover, "n001")
    eng.run()
    assert eng.strategy.forwarded[("n001", "g-r000001")] == 1
