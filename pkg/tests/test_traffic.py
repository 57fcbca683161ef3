import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adhocsim.packets import DataPacket
from adhocsim.scenario import ScenarioConfig, audit, simulate
from adhocsim.traffic import CbrFlow, MetricsLedger, e2ed, nrl, pdr, spawn_flows, throughput


def pkt(uid, t, size=512):
    return DataPacket(uid, 0, 1, size, t)


def test_ledger_metrics_by_hand():
    led = MetricsLedger()
    for uid, t in enumerate((0.0, 1.0, 2.0, 3.0)):
        led.record_sent(pkt(uid, t))
    p = [pkt(0, 0.0), pkt(1, 1.0)]
    led.record_delivered(p[0], 0.010)
    led.record_delivered(p[1], 1.030)
    led.record_dropped(pkt(2, 2.0), "no_route")
    for _ in range(6):
        led.record_control(0.5)
    assert pdr(led) == 0.5
    assert e2ed(led) == pytest.approx(20.0)
    assert nrl(led) == 3.0
    assert throughput(led, 4.0) == 2 * 512 * 8 / 4.0
    assert led.in_flight == 1
    assert led.drop_reasons == {"no_route": 1}


def test_duplicate_delivery_ignored():
    led = MetricsLedger()
    p = pkt(0, 0.0)
    led.record_sent(p)
    assert led.record_delivered(p, 0.1)
    assert not led.record_delivered(p, 0.2)
    led.record_dropped(p, "late")
    assert (led.data_delivered, led.data_dropped) == (1, 0)


def test_warmup_excludes_early_traffic():
    led = MetricsLedger(warmup=10.0)
    early, late = pkt(0, 5.0), pkt(1, 12.0)
    led.record_sent(early)
    led.record_sent(late)
    led.record_delivered(early, 11.0)
    led.record_control(9.0)
    led.record_control(10.0)
    assert led.data_sent == 1 and led.data_delivered == 0 and led.control_tx == 1


def test_empty_ledger_metrics_undefined():
    led = MetricsLedger()
    assert pdr(led) is None and e2ed(led) is None and nrl(led) is None
    with pytest.raises(ValueError):
        throughput(led, 0.0)


def test_flow_validation():
    with pytest.raises(ValueError):
        CbrFlow(1, 1)
    with pytest.raises(ValueError):
        CbrFlow(0, 1, interval=0.0)
    with pytest.raises(ValueError):
        CbrFlow(0, 1, start=-1.0)


@settings(max_examples=30)
@given(st.integers(0, 90), st.integers(0, 10_000))
def test_spawned_flows_distinct(count, seed):
    flows = spawn_flows(count, range(10), seed)
    pairs = [(f.src, f.dst) for f in flows]
    assert len(set(pairs)) == count
    assert all(0 <= f.start <= 10.0 and f.src != f.dst for f in flows)
    assert flows == spawn_flows(count, range(10), seed)


def test_too_many_flows_rejected():
    with pytest.raises(ValueError):
        spawn_flows(7, range(3), 1)


@pytest.mark.parametrize("protocol", ["aodv", "dsr", "fsr"])
def test_run_conserves_packets_and_audits(protocol):
    cfg = ScenarioConfig(protocol=protocol, nodes=12, sim_time=30.0, warmup=5.0, flows=4,
                         packet_interval=0.1, seed=3).validate()
    row, net = simulate(cfg)
    led = net.ledger
    assert led.data_sent == led.data_delivered + led.data_dropped + led.in_flight
    assert audit(cfg, row, led.dump())
    # delivered rate can never beat the offered load or the channel
    offered = cfg.flows * cfg.packet_size * 8 / cfg.packet_interval
    assert row.throughput_bps <= offered * 1.01
    assert row.throughput_bps <= cfg.data_rate


def test_audit_detects_tampering():
    cfg = ScenarioConfig(nodes=8, sim_time=20.0, warmup=2.0, flows=2, packet_interval=0.2).validate()
    row, net = simulate(cfg)
    dump = net.ledger.dump()
    dump["control_tx"] += 1
    assert not audit(cfg, row, dump)
