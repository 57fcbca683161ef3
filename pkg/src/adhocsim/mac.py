"""Simplified CSMA/CA MAC over a shared medium.

Carrier sense, random backoff, binary collisions (no capture), half-duplex
radios and unicast retries with a doubling contention window. ACKs are not
put on the air; a successful unicast just holds the sender for SIFS + ACK.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .engine import Engine, RngStream
from .packets import BROADCAST, CONTROL, Frame
from .phy import UNIT_DISK, ChannelModel, reception_probabilities

ACK_BYTES = 14


@dataclass(frozen=True)
class MacConfig:
    preset: str = "80211"
    slot: float = 20e-6
    sifs: float = 10e-6
    difs: float = 50e-6
    cw_min: int = 31
    cw_max: int = 1023
    retry_limit: int = 7
    header_overhead: int = 48
    queue_capacity: int = 50

    def __post_init__(self):
        if self.cw_min > self.cw_max:
            raise ValueError("cw_min must not exceed cw_max")
        if self.retry_limit < 1:
            raise ValueError("retry_limit must be >= 1")
        if min(self.slot, self.sifs, self.difs) < 0:
            raise ValueError("MAC timing constants must be non-negative")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")


MAC_PRESETS = {
    "80211": MacConfig(),
    "80211p": MacConfig(preset="80211p", slot=13e-6, sifs=32e-6, difs=58e-6,
                        cw_min=15, cw_max=1023),
}


def mac_preset(name: str) -> MacConfig:
    try:
        return MAC_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown MAC preset {name!r}; expected one of {sorted(MAC_PRESETS)}") from None


class Transmission:
    __slots__ = ("sender", "frame", "start", "end", "sense", "p_all", "cand")

    def __init__(self, sender, frame, start, end, sense, p_all, cand):
        self.sender = sender
        self.frame = frame
        self.start = start
        self.end = end
        self.sense = sense      # bool mask: nodes within carrier-sense range at start
        self.p_all = p_all      # per-node reception probability (None: certain within range)
        self.cand = cand        # candidate receiver ids


class Medium:
    """Shared wireless medium: carrier sense, contention and reception.

    Contention is resolved here rather than by per-node polling. A node
    that senses a transmission freezes its remaining backoff and resumes
    once it senses an idle channel; one engine event tracks the earliest
    ready contender. Nodes whose backoff expires at the same instant
    transmit together and may collide.
    """

    def __init__(self, engine: Engine, mobility, channel: ChannelModel, rng: RngStream,
                 on_control_tx=None, geometry_step: float = 0.1):
        if geometry_step < 0:
            raise ValueError("geometry_step must be non-negative")
        self.engine = engine
        self.geometry_step = geometry_step
        self._epoch = None
        self._rows: dict[int, tuple] = {}
        self.mobility = mobility
        self.channel = channel
        self.rng = rng
        self.cutoff = channel.cutoff
        self.macs: list[Mac] = []
        self.records: list[Transmission] = []
        self.on_control_tx = on_control_tx
        self.perfect_rx = channel.propagation == UNIT_DISK
        self.tx_count = 0
        self.contenders: dict[int, Mac] = {}
        self._wake = None

    def attach(self, mac: Mac) -> None:
        self.macs.append(mac)

    def busy_until(self, node: int) -> float:
        """End of the latest ongoing transmission this node can sense (0 if idle)."""
        now = self.engine.now
        latest = 0.0
        for tx in self.records:
            if tx.end > now and tx.end > latest and (tx.sender == node or tx.sense[node]):
                latest = tx.end
        return latest

    # -- contention --------------------------------------------------------
    def contend(self, mac: Mac, ready: float) -> None:
        """``mac`` wants the channel; its backoff completes at ``ready`` if left idle."""
        now = self.engine.now
        self.contenders[mac.node] = mac
        if self.busy_until(mac.node) > now:
            mac.ready = None
            mac.residual = ready - now
        else:
            mac.ready = ready
        self._reschedule()

    def _reschedule(self) -> None:
        best = None
        for m in self.contenders.values():
            r = m.ready
            if r is not None and (best is None or r < best):
                best = r
        w = self._wake
        if w is not None:
            if best is not None and w.time == best and not w.cancelled:
                return
            w.cancelled = True
            self._wake = None
        if best is not None:
            self._wake = self.engine.schedule(best, "timer", None, self._fire)

    def _fire(self) -> None:
        self._wake = None
        now = self.engine.now
        ready = [m for m in self.contenders.values() if m.ready is not None and m.ready <= now]
        for m in ready:
            del self.contenders[m.node]
            m.ready = None
        for m in ready:
            m.transmit()
        self._reschedule()

    def geometry(self, sender: int) -> tuple:
        """(sense mask, reception probabilities, candidate ids) for ``sender``.

        Positions are sampled on a ``geometry_step`` grid and rows are cached
        within a step; a step of 0 samples at every transmission.
        """
        now = self.engine.now
        step = self.geometry_step
        if step > 0:
            epoch = int(now / step)
            if epoch != self._epoch:
                self._epoch = epoch
                self._rows = {}
            row = self._rows.get(sender)
            if row is not None:
                return row
            t = epoch * step
        else:
            t = now
        pos = self.mobility.positions(t)
        sp = pos[sender]
        d = np.hypot(pos[:, 0] - sp[0], pos[:, 1] - sp[1])
        sense = d <= self.cutoff
        mask = sense.copy()
        mask[sender] = False
        cand = np.flatnonzero(mask)
        p_all = None if self.perfect_rx else reception_probabilities(d, self.channel)
        row = (sense, p_all, cand)
        if step > 0:
            self._rows[sender] = row
        return row

    def start(self, sender: int, frame: Frame, airtime: float) -> Transmission:
        now = self.engine.now
        sense, p_all, cand = self.geometry(sender)
        tx = Transmission(sender, frame, now, now + airtime, sense, p_all, cand)
        self.records.append(tx)
        self.tx_count += 1
        # contenders that sense this transmission freeze their backoff
        for node, m in self.contenders.items():
            if m.ready is not None and sense[node]:
                m.residual = m.ready - now
                m.ready = None
        if frame.kind == CONTROL and not frame.first_tx_done and self.on_control_tx is not None:
            self.on_control_tx()
        frame.first_tx_done = True
        self.engine.schedule(tx.end, "frame", sender, self._finish, tx)
        return tx

    def _received(self, tx: Transmission) -> np.ndarray:
        """Boolean mask over ``tx.cand`` of successful receptions."""
        n = len(tx.cand)
        if n == 0:
            return np.zeros(0, dtype=bool)
        cand = tx.cand
        if tx.p_all is None:
            ok = np.ones(n, dtype=bool)
        else:
            ok = self.rng.np.random(n) < tx.p_all[cand]
        for other in self.records:
            if other is tx or other.end <= tx.start or other.start >= tx.end:
                continue
            # half duplex: a candidate that was transmitting hears nothing
            ok &= cand != other.sender
            if not self.channel.collisions:
                continue
            # an interferer destroys reception where its own frame would have
            # been received (geometry taken at the interferer's start)
            hit = other.sense[cand]
            if other.p_all is not None:
                hit &= self.rng.np.random(n) < other.p_all[cand]
            ok &= ~hit
        return ok

    def _finish(self, tx: Transmission) -> None:
        ok = self._received(tx)
        frame = tx.frame
        macs = self.macs
        receivers = tx.cand[ok].tolist()
        if frame.dst == BROADCAST:
            for r in receivers:
                macs[r].upper.receive(frame)
            delivered = None
        else:
            delivered = frame.dst in receivers
            # overhearers see the frame as sent, before the receiver mutates the payload
            for r in receivers:
                m = macs[r]
                if r != frame.dst and m.upper.promiscuous:
                    m.upper.overhear(frame)
            if delivered:
                macs[frame.dst].upper.receive(frame)
        self._prune()
        macs[tx.sender].tx_done(frame, delivered)
        # resume frozen contenders that now sense an idle channel
        now = self.engine.now
        sense = tx.sense
        live = [r for r in self.records if r.end > now]
        for node, m in self.contenders.items():
            if m.ready is None and sense[node]:
                for r in live:
                    if r.sender == node or r.sense[node]:
                        break
                else:
                    m.ready = now + max(m.residual, m.config.difs)
        self._reschedule()

    def _prune(self) -> None:
        now = self.engine.now
        # a frame ending right now may still be waiting for its own _finish
        live = [tx for tx in self.records if tx.end >= now]
        horizon = min((tx.start for tx in live), default=now)
        self.records = [tx for tx in self.records if tx.end > horizon]


class Mac:
    """Per-node CSMA/CA entity with a priority drop-tail queue.

    ``upper`` is the routing agent; it must provide ``receive(frame)``,
    ``overhear(frame)``, ``tx_failed(frame)``, ``frame_dropped(frame)`` and a
    ``promiscuous`` attribute.
    """

    def __init__(self, node: int, engine: Engine, medium: Medium, config: MacConfig, rng: RngStream):
        self.node = node
        self.engine = engine
        self.medium = medium
        self.config = config
        self.rng = rng
        self.upper = None
        self.ctrl: deque[Frame] = deque()
        self.data: deque[Frame] = deque()
        self.current: Frame | None = None
        self.attempts = 0
        self.cw = config.cw_min
        self.ready: float | None = None
        self.residual = 0.0
        self.transmitting = False
        self.rate = medium.channel.data_rate
        self.ack_time = config.sifs + ACK_BYTES * 8 / self.rate
        self.stats = {"attempts": 0, "failed": 0, "queue_drops": 0}
        medium.attach(self)

    def __len__(self) -> int:
        return len(self.ctrl) + len(self.data)

    def enqueue(self, frame: Frame) -> bool:
        if len(self) >= self.config.queue_capacity:
            self.stats["queue_drops"] += 1
            self.upper.frame_dropped(frame)
            return False
        (self.ctrl if frame.kind == CONTROL else self.data).append(frame)
        if self.current is None:
            self._next(self.engine.now)
        return True

    def purge(self, next_hop: int) -> list[Frame]:
        """Remove queued (not in-service) unicast frames addressed to ``next_hop``."""
        out = []
        for q in (self.ctrl, self.data):
            keep = deque()
            for f in q:
                (out if f.dst == next_hop else keep).append(f)
            q.clear()
            q.extend(keep)
        return out

    def _backoff(self) -> float:
        return self.config.difs + int(self.rng.py.random() * (self.cw + 1)) * self.config.slot

    def _next(self, ready_at: float) -> None:
        if self.ctrl:
            self.current = self.ctrl.popleft()
        elif self.data:
            self.current = self.data.popleft()
        else:
            self.current = None
            return
        self.attempts = 0
        self.cw = self.config.cw_min
        self.medium.contend(self, ready_at + self._backoff())

    def transmit(self) -> None:
        frame = self.current
        self.attempts += 1
        self.stats["attempts"] += 1
        self.transmitting = True
        airtime = (frame.size + self.config.header_overhead) * 8 / self.rate
        self.medium.start(self.node, frame, airtime)

    def tx_done(self, frame: Frame, delivered: bool | None) -> None:
        self.transmitting = False
        now = self.engine.now
        if delivered is None:
            self._next(now)
            return
        if delivered:
            self._next(now + self.ack_time)
            return
        if self.attempts >= self.config.retry_limit:
            self.stats["failed"] += 1
            self.current = None
            self.upper.tx_failed(frame)
            if self.current is None:
                self._next(now)
            return
        self.cw = min(2 * self.cw + 1, self.config.cw_max)
        self.medium.contend(self, now + self._backoff())
