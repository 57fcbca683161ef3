"""Plumbing shared by the routing agents."""

from __future__ import annotations

from collections import OrderedDict, deque

from ..engine import Engine, RngStream
from ..mac import Mac
from ..packets import BROADCAST, CONTROL, DATA, DataPacket, Frame
from ..traffic import MetricsLedger


class SendBuffer:
    """Per-destination packet queues awaiting a route (drop-oldest, timed expiry)."""

    def __init__(self, capacity: int = 64, timeout: float = 30.0):
        self.capacity = capacity
        self.timeout = timeout
        self._q: dict[int, deque] = {}

    def __len__(self) -> int:
        return sum(len(q) for q in self._q.values())

    def __contains__(self, dest: int) -> bool:
        return bool(self._q.get(dest))

    def destinations(self) -> list[int]:
        return [d for d, q in self._q.items() if q]

    def push(self, pkt: DataPacket, now: float) -> list[DataPacket]:
        """Buffer ``pkt``; returns packets that were evicted or had expired."""
        q = self._q.setdefault(pkt.dst, deque())
        out = self._expire(q, now)
        q.append(pkt)
        while len(q) > self.capacity:
            out.append(q.popleft())
        return out

    def _expire(self, q: deque, now: float) -> list[DataPacket]:
        out = []
        while q and now - q[0].sent_at >= self.timeout:
            out.append(q.popleft())
        return out

    def take(self, dest: int, now: float) -> tuple[list[DataPacket], list[DataPacket]]:
        """Remove everything for ``dest``: (still-fresh packets, expired packets)."""
        q = self._q.pop(dest, None)
        if not q:
            return [], []
        expired = self._expire(q, now)
        return list(q), expired

    def expire_all(self, now: float) -> list[DataPacket]:
        out = []
        for q in self._q.values():
            out.extend(self._expire(q, now))
        return out


class RoutingAgent:
    """Base class: wiring to MAC, ledger and engine; data delivery helpers."""

    promiscuous = False
    name = "base"

    def __init__(self, node: int, engine: Engine, mac: Mac, ledger: MetricsLedger, rng: RngStream):
        self.node = node
        self.engine = engine
        self.mac = mac
        self.ledger = ledger
        self.rng = rng
        mac.upper = self
        self.delivered_log = []

    def start(self) -> None:
        pass

    # upper interface
    def send_data(self, pkt: DataPacket) -> None:
        raise NotImplementedError

    # MAC interface
    def receive(self, frame: Frame) -> None:
        raise NotImplementedError

    def overhear(self, frame: Frame) -> None:
        pass

    def tx_failed(self, frame: Frame) -> None:
        if frame.kind == DATA:
            self.drop(frame.payload, "tx_failed")

    def frame_dropped(self, frame: Frame) -> None:
        if frame.kind == DATA:
            self.drop(frame.payload, "queue_full")

    # helpers
    def drop(self, pkt: DataPacket, reason: str) -> None:
        self.ledger.record_dropped(pkt, reason)

    def deliver(self, pkt: DataPacket) -> bool:
        return self.ledger.record_delivered(pkt, self.engine.now)

    def send_frame(self, dst: int, kind: str, size: int, payload) -> bool:
        return self.mac.enqueue(Frame(self.node, dst, kind, size, payload))

    def broadcast_control(self, msg, size: int) -> bool:
        return self.send_frame(BROADCAST, CONTROL, size, msg)

    def unicast_control(self, next_hop: int, msg, size: int) -> bool:
        return self.send_frame(next_hop, CONTROL, size, msg)

    def later(self, delay: float, fn, *args):
        return self.engine.schedule(self.engine.now + delay, "timer", self.node, fn, *args)


class LruDict(OrderedDict):
    """OrderedDict with a bounded size; the oldest key is dropped first."""

    def __init__(self, maxlen: int):
        super().__init__()
        self.maxlen = maxlen

    def __setitem__(self, key, value):
        if key in self:
            self.move_to_end(key)
        super().__setitem__(key, value)
        while len(self) > self.maxlen:
            self.popitem(last=False)
