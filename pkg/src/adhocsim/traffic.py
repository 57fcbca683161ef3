"""CBR traffic and the throughput / E2ED / NRL metric pipeline."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field

from .engine import SUBSYSTEMS, Engine, RngStream
from .packets import DataPacket


@dataclass(frozen=True)
class CbrFlow:
    src: int
    dst: int
    start: float = 0.0
    interval: float = 0.03
    payload: int = 512
    stop: float = float("inf")

    def __post_init__(self):
        if self.interval <= 0:
            raise ValueError("CBR interval must be positive")
        if self.payload <= 0:
            raise ValueError("CBR payload must be positive")
        if self.src == self.dst:
            raise ValueError("CBR flow needs distinct endpoints")
        if self.start < 0:
            raise ValueError("flow start must be non-negative")


@dataclass
class MetricsLedger:
    """Run counters. Packets emitted before ``warmup`` and control frames
    sent before it are ignored by every metric."""

    warmup: float = 0.0
    data_sent: int = 0
    data_delivered: int = 0
    data_dropped: int = 0
    delivered_bytes: int = 0
    control_tx: int = 0
    latencies: list = field(default_factory=list)   # (uid, sent_at, delivered_at)
    hops: dict = field(default_factory=dict)        # uid -> hop count at delivery
    flow_of: dict = field(default_factory=dict)     # uid -> flow id
    drop_reasons: Counter = field(default_factory=Counter)
    _live: set = field(default_factory=set, repr=False)
    _done: set = field(default_factory=set, repr=False)

    def record_sent(self, pkt: DataPacket) -> None:
        if pkt.sent_at < self.warmup:
            pkt.counted = False
            return
        pkt.counted = True
        self.data_sent += 1
        self._live.add(pkt.uid)

    def record_delivered(self, pkt: DataPacket, now: float) -> bool:
        """Returns False for a duplicate copy (ignored)."""
        if pkt.uid in self._done:
            return False
        self._done.add(pkt.uid)
        if not pkt.counted:
            return True
        self._live.discard(pkt.uid)
        self.data_delivered += 1
        self.delivered_bytes += pkt.size
        self.latencies.append((pkt.uid, pkt.sent_at, now))
        self.hops[pkt.uid] = pkt.hops
        self.flow_of[pkt.uid] = pkt.flow
        return True

    def record_dropped(self, pkt: DataPacket, reason: str) -> None:
        if not pkt.counted or pkt.uid not in self._live:
            return
        self._live.discard(pkt.uid)
        self.data_dropped += 1
        self.drop_reasons[reason] += 1

    def record_control(self, now: float) -> None:
        if now >= self.warmup:
            self.control_tx += 1

    @property
    def in_flight(self) -> int:
        return len(self._live)

    def dump(self) -> dict:
        return {
            "warmup": self.warmup,
            "data_sent": self.data_sent,
            "data_delivered": self.data_delivered,
            "data_dropped": self.data_dropped,
            "in_flight": self.in_flight,
            "delivered_bytes": self.delivered_bytes,
            "control_tx": self.control_tx,
            "latencies": [list(x) for x in self.latencies],
            "drop_reasons": dict(self.drop_reasons),
        }


def throughput(ledger: MetricsLedger, duration: float) -> float:
    """Delivered application bits per second."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    return ledger.delivered_bytes * 8 / duration


def e2ed(ledger: MetricsLedger) -> float | None:
    """Mean end-to-end delay of delivered packets in ms (None if nothing arrived)."""
    if not ledger.latencies:
        return None
    return 1000.0 * sum(d - s for _, s, d in ledger.latencies) / len(ledger.latencies)


def nrl(ledger: MetricsLedger) -> float | None:
    if ledger.data_delivered == 0:
        return None
    return ledger.control_tx / ledger.data_delivered


def pdr(ledger: MetricsLedger) -> float | None:
    if ledger.data_sent == 0:
        return None
    return ledger.data_delivered / ledger.data_sent


def spawn_flows(count: int, nodes, seed: int | RngStream, start_window: float = 10.0,
                interval: float = 0.03, payload: int = 512, stop: float = float("inf")) -> list[CbrFlow]:
    """``count`` distinct ordered (src, dst) pairs with starts uniform in the window."""
    nodes = sorted(nodes)
    pairs = list(itertools.permutations(nodes, 2))
    if count < 0 or count > len(pairs):
        raise ValueError(f"cannot draw {count} distinct flows from {len(nodes)} nodes")
    rng = seed if isinstance(seed, RngStream) else RngStream(seed, SUBSYSTEMS["traffic"])
    chosen = rng.py.sample(pairs, count)
    return [CbrFlow(s, d, start=rng.uniform(0.0, start_window), interval=interval,
                    payload=payload, stop=stop) for s, d in chosen]


class CbrSource:
    """Drives one flow: emits packets at ``start + k * interval`` until ``stop``."""

    def __init__(self, engine: Engine, flow: CbrFlow, flow_id: int, agent, ledger: MetricsLedger,
                 uid_counter):
        self.engine = engine
        self.flow = flow
        self.flow_id = flow_id
        self.agent = agent
        self.ledger = ledger
        self._uids = uid_counter
        self.k = 0
        self.emitted = 0

    def start(self) -> None:
        if self.flow.start < self.flow.stop:
            self.engine.schedule(self.flow.start, "traffic", self.flow.src, self._tick)

    def _tick(self) -> None:
        now = self.engine.now
        f = self.flow
        pkt = DataPacket(next(self._uids), f.src, f.dst, f.payload, now, flow=self.flow_id)
        self.ledger.record_sent(pkt)
        self.emitted += 1
        self.agent.send_data(pkt)
        self.k += 1
        t = f.start + self.k * f.interval
        if t < f.stop:
            self.engine.schedule(t, "traffic", f.src, self._tick)
