import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaincc

from adhocsim.engine import Engine
from adhocsim.mac import Mac, MacConfig, Medium, mac_preset
from adhocsim.mobility import StaticPlacement
from adhocsim.packets import BROADCAST, CONTROL, DATA, Frame
from adhocsim.phy import (NAKAGAMI, ChannelModel, perfect_channel, reception_probabilities,
                          reception_probability)


class Sink:
    promiscuous = False

    def __init__(self):
        self.got, self.failed, self.dropped = [], [], []

    def receive(self, frame):
        self.got.append(frame)

    def overhear(self, frame):
        pass

    def tx_failed(self, frame):
        self.failed.append(frame)

    def frame_dropped(self, frame):
        self.dropped.append(frame)


def radio_net(coords, channel=None, config=None, seed=1):
    eng = Engine(seed)
    medium = Medium(eng, StaticPlacement(coords), channel or ChannelModel(), eng.stream("channel"),
                    geometry_step=0.0)
    macs = []
    for i in range(len(coords)):
        m = Mac(i, eng, medium, config or MacConfig(), eng.node_stream("mac", i))
        m.upper = Sink()
        macs.append(m)
    return eng, medium, macs


def test_airtime():
    assert ChannelModel().airtime(512) == pytest.approx(2.048e-3)
    assert ChannelModel(data_rate=6e6).airtime(512, 48) == pytest.approx(560 * 8 / 6e6)


def test_unit_disk_edge():
    ch = ChannelModel()
    assert reception_probability(250.0, ch) == 1.0
    assert reception_probability(250.01, ch) == 0.0
    assert ch.cutoff == 250.0


@settings(max_examples=40)
@given(st.integers(1, 8), st.floats(0.0, 800.0))
def test_integer_shape_matches_incomplete_gamma(m, d):
    ch = ChannelModel(NAKAGAMI, m=float(m))
    fast = reception_probabilities(np.array([d]), ch)[0]
    x = m * (d / 250.0) ** 2
    assert fast == pytest.approx(float(gammaincc(m, x)), abs=1e-12)
    assert reception_probability(d, ch) == pytest.approx(fast, abs=1e-12)


def test_nakagami_monotone_and_cutoff():
    ch = ChannelModel(NAKAGAMI, m=3.0)
    d = np.linspace(0, 600, 200)
    p = reception_probabilities(d, ch)
    assert (np.diff(p) <= 1e-15).all()
    assert reception_probability(ch.cutoff, ch) == pytest.approx(ch.min_probability)


def test_large_shape_approaches_step():
    # Q(m, m d^2/R^2) narrows around R like 1/sqrt(m); at m = 50 the band
    # 0.9R..1.1R is still 0.92 / 0.075, so the tight band is checked at m = 500
    wide = ChannelModel(NAKAGAMI, m=50.0)
    assert reception_probability(200.0, wide) > 0.99
    assert reception_probability(300.0, wide) < 0.01
    tight = ChannelModel(NAKAGAMI, m=500.0)
    assert reception_probability(225.0, tight) > 0.99
    assert reception_probability(275.0, tight) < 0.01
    spreads = [reception_probability(225.0, ChannelModel(NAKAGAMI, m=m))
               - reception_probability(275.0, ChannelModel(NAKAGAMI, m=m)) for m in (1, 3, 10, 50, 500)]
    assert spreads == sorted(spreads)


def test_channel_validation():
    with pytest.raises(ValueError):
        ChannelModel(propagation="free-space")
    with pytest.raises(ValueError):
        ChannelModel(m=0.3)
    with pytest.raises(ValueError):
        mac_preset("80211x")


def test_unicast_delivered_once():
    eng, _, macs = radio_net([(0, 0), (100, 0)])
    macs[0].enqueue(Frame(0, 1, DATA, 512, "x"))
    eng.run_until(1.0)
    assert [f.payload for f in macs[1].upper.got] == ["x"]
    assert macs[0].stats["attempts"] == 1


def test_broadcast_not_retried():
    eng, medium, macs = radio_net([(0, 0), (100, 0), (5000, 0)])
    macs[0].enqueue(Frame(0, BROADCAST, CONTROL, 64, "hello"))
    eng.run_until(1.0)
    assert medium.tx_count == 1
    assert len(macs[1].upper.got) == 1 and macs[2].upper.got == []


def test_out_of_range_fails_after_retry_limit():
    cfg = MacConfig(retry_limit=5)
    eng, medium, macs = radio_net([(0, 0), (1000, 0)], config=cfg)
    macs[0].enqueue(Frame(0, 1, DATA, 512, "x"))
    eng.run_until(5.0)
    assert macs[0].stats["attempts"] == 5
    assert len(macs[0].upper.failed) == 1


def test_simultaneous_senders_collide():
    # 0 and 2 are hidden from each other; both reach 1
    eng, medium, macs = radio_net([(0, 0), (200, 0), (400, 0)], config=MacConfig(retry_limit=1))
    # identical backoff draws force a same-instant start
    for m in (macs[0], macs[2]):
        m._backoff = lambda: 50e-6
    macs[0].enqueue(Frame(0, 1, DATA, 512, "a"))
    macs[2].enqueue(Frame(2, 1, DATA, 512, "b"))
    eng.run_until(1.0)
    assert macs[1].upper.got == []
    assert len(macs[0].upper.failed) == 1 and len(macs[2].upper.failed) == 1


def test_collisions_switch_off():
    eng, _, macs = radio_net([(0, 0), (200, 0), (400, 0)], channel=perfect_channel())
    for m in (macs[0], macs[2]):
        m._backoff = lambda: 50e-6
    macs[0].enqueue(Frame(0, 1, DATA, 512, "a"))
    macs[2].enqueue(Frame(2, 1, DATA, 512, "b"))
    eng.run_until(1.0)
    assert sorted(f.payload for f in macs[1].upper.got) == ["a", "b"]


def test_carrier_sense_defers():
    eng, medium, macs = radio_net([(0, 0), (100, 0), (200, 0)])
    for i in (0, 2):
        for k in range(5):
            macs[i].enqueue(Frame(i, 1, DATA, 512, (i, k)))
    eng.run_until(2.0)
    assert len(macs[1].upper.got) == 10
    assert macs[0].stats["failed"] == macs[2].stats["failed"] == 0


def test_queue_overflow_reported():
    eng, _, macs = radio_net([(0, 0), (100, 0)], config=MacConfig(queue_capacity=2))
    for k in range(4):
        macs[0].enqueue(Frame(0, 1, DATA, 512, k))
    assert len(macs[0].upper.dropped) == 1
    eng.run_until(1.0)
    assert [f.payload for f in macs[1].upper.got] == [0, 1, 2]


def test_retries_compound_delivery_probability():
    # per-attempt success 1/2 at d = R sqrt(ln 2) with m = 1; four tries give 15/16
    ch = ChannelModel(NAKAGAMI, m=1.0)
    d = 250.0 * math.sqrt(math.log(2.0))
    assert reception_probability(d, ch) == pytest.approx(0.5)
    eng, _, macs = radio_net([(0, 0), (d, 0)], channel=ch, config=MacConfig(retry_limit=4), seed=5)
    n = 4000
    for k in range(n):
        eng.schedule(k * 0.05, "traffic", 0, macs[0].enqueue, Frame(0, 1, DATA, 100, k))
    eng.run_until(n * 0.05 + 1)
    ok = len(macs[1].upper.got)
    assert ok + len(macs[0].upper.failed) == n
    assert ok / n == pytest.approx(0.9375, abs=0.01)


def test_busy_network_invariants(monkeypatch):
    from adhocsim.mac import Medium as M
    from adhocsim.scenario import ScenarioConfig, build_network

    spans, failures = {}, []
    start = M.start

    def spy(self, sender, frame, airtime):
        tx = start(self, sender, frame, airtime)
        spans.setdefault(sender, []).append((tx.start, tx.end))
        return tx

    monkeypatch.setattr(M, "start", spy)
    net = build_network(ScenarioConfig(protocol="aodv", nodes=15, sim_time=20.0, warmup=0.0,
                                       flows=6, field_width=600.0, field_height=600.0))
    for mac in net.macs:
        orig = mac.upper.tx_failed

        def failed(frame, mac=mac, orig=orig):
            failures.append(mac.attempts)
            orig(frame)
        mac.upper.tx_failed = failed
    net.run(20.0)
    for sender, s in spans.items():
        assert all(a[1] <= b[0] for a, b in zip(s, s[1:])), sender
    assert failures and set(failures) == {net.macs[0].config.retry_limit}
