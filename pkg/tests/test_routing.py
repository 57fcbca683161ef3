import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adhocsim.mobility import Mobility
from adhocsim.routing import AodvConfig, DsrConfig, FsrConfig, RouteCache, next_ttl, ring_sequence
from adhocsim.routing.aodv import ring_timeout
from adhocsim.routing.base import LruDict, SendBuffer
from adhocsim.routing.dsr import DsrRreq, LoopError
from adhocsim.routing.fsr import FsrUpdate, shortest_next_hops
from adhocsim.packets import DataPacket
from adhocsim.scenario import Network, static_network
from adhocsim.engine import Engine
from adhocsim.mac import mac_preset
from adhocsim.phy import perfect_channel
from adhocsim.traffic import CbrFlow, MetricsLedger

from conftest import connected_layout, flow_hops, run_static


class Vanishing(Mobility):
    """Static line whose last node jumps out of range at ``t_gone``."""

    def __init__(self, coords, t_gone):
        self._pos = np.asarray(coords, dtype=float)
        self._far = self._pos.copy()
        self._far[-1] = (1e5, 1e5)
        self.n = len(coords)
        self.t_gone = t_gone

    def positions(self, t):
        return self._far if t >= self.t_gone else self._pos

    def position_at(self, node, t):
        return tuple(self.positions(t)[node])


def vanishing_network(coords, protocol, t_gone, config=None):
    eng = Engine(1)
    return Network(eng, Vanishing(coords, t_gone), perfect_channel(), mac_preset("80211"),
                   protocol, config, ledger=MetricsLedger(), geometry_step=0.0)


# -- AODV ------------------------------------------------------------------

def test_ring_steps():
    cfg = AodvConfig()
    assert ring_sequence(cfg) == [1, 3, 5, 7, 35]
    assert ring_sequence(cfg, with_retries=True) == [1, 3, 5, 7, 35, 35, 35]
    mod = AodvConfig(ttl_start=2, ttl_increment=4, ttl_threshold=9)
    assert ring_sequence(mod) == [2, 6, 35]
    assert next_ttl(35, cfg) == 35
    assert ring_timeout(3, cfg) == pytest.approx(0.24)


@given(st.integers(1, 5), st.integers(1, 6), st.integers(6, 20))
def test_ring_strictly_increases_to_diameter(start, inc, thresh):
    cfg = AodvConfig(ttl_start=start, ttl_increment=inc, ttl_threshold=thresh, net_diameter=35)
    seq = ring_sequence(cfg)
    assert seq[0] == start and seq[-1] == 35
    assert all(a < b for a, b in zip(seq, seq[1:]))
    assert all(t <= thresh for t in seq[:-1])


def test_aodv_config_validation():
    with pytest.raises(ValueError):
        AodvConfig(ttl_threshold=40)
    with pytest.raises(ValueError):
        AodvConfig(ttl_start=0)
    assert AodvConfig().path_discovery_time == pytest.approx(5.6)


@pytest.mark.parametrize("protocol", ["aodv", "mod-aodv"])
def test_aodv_chain_discovery(chain, protocol):
    net = run_static(chain, protocol, [(0, 3)], start=1.0, packets=10)
    assert net.ledger.data_delivered == 10
    assert set(net.ledger.hops.values()) == {3}
    r = net.agents[0].routes[3]
    assert (r.next_hop, r.hops) == (1, 3)


def test_aodv_link_break_reported():
    coords = [(0, 0), (200, 0), (400, 0), (600, 0)]
    net = vanishing_network(coords, "aodv", 5.0, AodvConfig(hello_enabled=False))
    net.add_flow(CbrFlow(0, 3, start=1.0, interval=0.5, stop=10.0))
    net.run(15.0)
    assert net.ledger.data_delivered >= 7
    assert net.agents[2].counters["rerr"] >= 1
    assert net.agents[0].valid_route(3) is None
    assert net.ledger.in_flight == 0 or net.ledger.data_dropped > 0


def test_rerr_rate_limited():
    net = static_network([(0, 0), (100, 0)], "aodv", AodvConfig(hello_enabled=False))
    a = net.agents[0]
    for _ in range(25):
        a._send_rerr([(5, 1)], {1})
    assert a.counters["rerr"] == 10
    net.engine.run_until(1.5)
    a._send_rerr([(5, 1)], {1})
    assert a.counters["rerr"] == 11


# -- DSR ------------------------------------------------------------------

def test_cache_prefix_lookup_prefers_fewest_hops():
    c = RouteCache(8)
    c.insert((0, 1, 2, 3, 4), 0.0)
    c.insert((0, 5, 4), 1.0)
    assert c.lookup(4, 2.0) == [0, 5, 4]
    assert c.lookup(2, 2.0) == [0, 1, 2]
    assert c.hops_to(3) == 3
    assert c.lookup(0, 2.0) is None and c.hops_to(0) is None
    assert c.lookup(9, 2.0) is None


def test_cache_ties_go_to_most_recent():
    c = RouteCache(8)
    c.insert((0, 1, 9), 0.0)
    c.insert((0, 2, 9), 1.0)
    assert c.peek(9) == [0, 2, 9]
    c.lookup(9, 2.0)
    c.insert((0, 1, 9), 3.0)
    assert c.peek(9) == [0, 1, 9]


def test_cache_rejects_loops_and_stubs():
    c = RouteCache(4)
    with pytest.raises(LoopError):
        c.insert((0, 1, 0), 0.0)
    with pytest.raises(ValueError):
        c.insert((0,), 0.0)
    with pytest.raises(ValueError):
        RouteCache(0)


def test_remove_link_either_direction():
    c = RouteCache(8)
    c.insert((0, 1, 2), 0.0)
    c.insert((3, 2, 1, 4), 0.0)
    c.insert((0, 5), 0.0)
    assert c.remove_link(2, 1) == 2
    assert c.routes() == [(0, 5)]
    assert c.lookup(2, 1.0) is None
    assert c.remove_link(7, 8) == 0


@settings(max_examples=60)
@given(st.lists(st.lists(st.integers(0, 12), min_size=2, max_size=6, unique=True),
                min_size=1, max_size=40), st.integers(1, 10))
def test_cache_behaves_like_lru_list(routes, cap):
    c = RouteCache(cap)
    model: list[tuple] = []
    for k, r in enumerate(routes):
        r = tuple(r)
        c.insert(r, float(k))
        if r in model:
            model.remove(r)
        model.append(r)
        del model[:-cap]
    assert c.routes() == model
    # every cached node is reachable with the shortest prefix among stored routes
    for dest in {n for r in model for n in r[1:]}:
        best = min(r.index(dest) for r in model if dest in r[1:])
        assert c.hops_to(dest) == best


def test_dsr_config_validation():
    with pytest.raises(ValueError):
        DsrConfig(cache_capacity=0)
    with pytest.raises(ValueError):
        DsrConfig(request_timeout=2.0, max_request_timeout=1.0)


@pytest.mark.parametrize("seed", [3, 4, 5])
def test_dsr_single_flow_follows_shortest_path(seed):
    coords, g, rng = connected_layout(seed)
    s, d = disjoint = rng.sample(range(25), 2)
    net = run_static(coords, "dsr", [disjoint], start=1.0, packets=10)
    hops = [h for _, h in flow_hops(net)[0]]
    assert len(hops) == 10
    assert set(hops) == {nx.shortest_path_length(g, s, d)}


def test_dsr_forgets_broken_route():
    coords = [(0, 0), (200, 0), (400, 0), (600, 0)]
    net = vanishing_network(coords, "dsr", t_gone=5.0)
    net.add_flow(CbrFlow(0, 3, start=1.0, interval=0.5, stop=10.0))
    net.run(15.0)
    assert net.ledger.data_delivered >= 7
    assert net.agents[0].cache.hops_to(3) is None
    assert net.ledger.data_dropped > 0


def _dsr_node_with_cached_tail():
    coords = [(i * 100.0, 0.0) for i in range(10)]
    net = static_network(coords, "dsr")
    agent = net.agents[5]
    agent.learn((5, 9))
    return net, agent


def test_held_cache_reply_takes_shorter_copy():
    net, a = _dsr_node_with_cached_tail()
    a._on_rreq(DsrRreq(0, 9, 1, (0, 1, 2, 3), 10), prev=3)
    assert a._pending_reply[(0, 1)].route == (0, 1, 2, 3, 5, 9)
    a._on_rreq(DsrRreq(0, 9, 1, (0,), 10), prev=0)
    assert a._pending_reply[(0, 1)].route == (0, 5, 9)
    assert a._pending_reply[(0, 1)].back == (5, 0)
    net.engine.run_until(1.0)
    assert a.counters["rrep"] == 1 and not a._pending_reply


def test_longer_cache_replies_wait_longer():
    net, a = _dsr_node_with_cached_tail()
    cfg = a.config
    # hold = H * (hops - 1 + U[0,1)): a 2-hop answer leaves within 2H, a 5-hop one after 4H
    a._on_rreq(DsrRreq(0, 9, 1, (0,), 10), prev=0)
    net.engine.run_until(2 * cfg.reply_holdoff)
    assert a.counters["rrep"] == 1
    a._on_rreq(DsrRreq(1, 9, 7, (1, 2, 3, 4), 10), prev=4)
    net.engine.run_until(net.engine.now + 4 * cfg.reply_holdoff - 1e-9)
    assert a.counters["rrep"] == 1


def test_held_reply_cancelled_when_source_already_has_route():
    net, a = _dsr_node_with_cached_tail()
    a._on_rreq(DsrRreq(0, 9, 1, (0, 1, 2, 3), 10), prev=3)
    a._cancel_replies(0, 9, 3)
    net.engine.run_until(1.0)
    assert a.counters["rrep"] == 0


# -- FSR ------------------------------------------------------------------

def test_next_hop_ties_break_to_smallest_id():
    adj = {1: (0, 3), 2: (0, 3), 3: (1, 2, 4), 4: (3,)}
    nh = shortest_next_hops(0, (2, 1), adj)
    assert nh == {1: (1, 1), 2: (2, 1), 3: (1, 2), 4: (1, 3)}


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_next_hops_match_bfs(seed):
    g = nx.gnp_random_graph(12, 0.25, seed=seed)
    adj = {u: tuple(g.neighbors(u)) for u in g}
    nh = shortest_next_hops(0, adj[0], adj)
    reach = nx.single_source_shortest_path_length(g, 0)
    assert {v: h for v, (_, h) in nh.items()} == {v: h for v, h in reach.items() if v != 0}
    for v, (hop, h) in nh.items():
        assert g.has_edge(0, hop)
        assert nx.shortest_path_length(g, hop, v) == h - 1


def test_update_well_formed():
    assert FsrUpdate({1: (3, (2, 4))}, False).well_formed()
    assert not FsrUpdate({1: (-1, ())}, True).well_formed()
    assert not FsrUpdate({1: (1, [2])}, True).well_formed()
    assert FsrUpdate({1: (3, (2, 4))}, False).size == 8 + 6 + 4


def test_fsr_config_validation():
    with pytest.raises(ValueError):
        FsrConfig(inner_interval=20.0, outer_interval=15.0)
    with pytest.raises(ValueError):
        FsrConfig(inner_radius=0)


def test_fsr_ring_converges():
    # four nodes on a square, each side 200 m, diagonals 283 m (out of range)
    coords = [(0, 0), (200, 0), (200, 200), (0, 200)]
    net = static_network(coords, "mod-fsr")
    net.run(20.0)
    for a in net.agents:
        opp = (a.node + 2) % 4
        assert a.distance(opp) == 2
        assert a.compute_routes()[opp] == min((a.node + 1) % 4, (a.node + 3) % 4)
    # inner ticks every second with a full table every third tick
    a = net.agents[0]
    assert a.broadcasts["outer"] == (a.ticks + 2) // 3
    assert a.scope_of(2) == "inner"


def test_fsr_delivers_once_converged(chain):
    net = run_static(chain, "mod-fsr", [(0, 3)], start=15.0, packets=10)
    assert net.ledger.data_delivered == 10


def test_fsr_drops_without_route(chain):
    net = run_static(chain, "fsr", [(0, 3)], start=0.0, packets=2, settle=0.5)
    assert net.ledger.drop_reasons["no_route"] >= 1


# -- shared plumbing --------------------------------------------------------

def test_send_buffer_expiry_and_capacity():
    b = SendBuffer(capacity=2, timeout=5.0)
    pk = [DataPacket(i, 0, 1, 10, float(i)) for i in range(4)]
    assert b.push(pk[0], 0.0) == []
    b.push(pk[1], 1.0)
    assert b.push(pk[2], 2.0) == [pk[0]]
    assert 1 in b and len(b) == 2
    fresh, old = b.take(1, 6.5)
    assert old == [pk[1]] and fresh == [pk[2]]
    assert 1 not in b


def test_lru_dict_bound():
    d = LruDict(2)
    d["a"], d["b"] = 1, 2
    d["a"] = 3
    d["c"] = 4
    assert list(d) == ["a", "c"]
