"""AODV with expanding ring search, HELLOs, local repair and gratuitous RREPs.

MOD AODV is the same state machine with wider ERS rings.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from ..packets import BROADCAST, CONTROL, DATA, DataPacket, Frame
from .base import RoutingAgent, SendBuffer

VALID = "valid"
INVALID = "invalid"
REPAIR = "under_repair"

RREQ_SIZE = 24
RREP_SIZE = 20


@dataclass(frozen=True)
class AodvConfig:
    ttl_start: int = 1
    ttl_increment: int = 2
    ttl_threshold: int = 7
    net_diameter: int = 35
    hello_interval: float = 1.0
    allowed_hello_loss: int = 2
    active_route_timeout: float = 3.0
    rreq_retries: int = 2
    local_repair: bool = True
    gratuitous_rrep: bool = True
    intermediate_reply: bool = True
    hello_enabled: bool = True
    node_traversal_time: float = 0.04
    local_add_ttl: int = 2
    buffer_capacity: int = 64
    buffer_timeout: float = 30.0
    jitter: float = 0.01
    rerr_rate_limit: int = 10      # RERR messages per second

    def __post_init__(self):
        if self.ttl_start < 1 or self.ttl_increment < 1:
            raise ValueError("ttl_start and ttl_increment must be >= 1")
        if self.ttl_threshold >= self.net_diameter:
            raise ValueError("ttl_threshold must be below net_diameter")
        if self.hello_interval <= 0 or self.active_route_timeout <= 0:
            raise ValueError("AODV timers must be positive")
        if self.rreq_retries < 0:
            raise ValueError("rreq_retries must be non-negative")

    @property
    def net_traversal_time(self) -> float:
        return 2 * self.node_traversal_time * self.net_diameter

    @property
    def path_discovery_time(self) -> float:
        return 2 * self.net_traversal_time

    @property
    def max_repair_ttl(self) -> int:
        return int(0.3 * self.net_diameter)


AODV_PRESETS = {
    "aodv": AodvConfig(),
    "mod-aodv": AodvConfig(ttl_start=2, ttl_increment=4, ttl_threshold=9),
}


def next_ttl(previous: int | None, config: AodvConfig) -> int:
    """Expanding-ring step: start, then +increment up to the threshold, then network-wide."""
    if previous is None:
        return min(config.ttl_start, config.net_diameter)
    if previous >= config.net_diameter:
        return config.net_diameter
    nxt = previous + config.ttl_increment
    return nxt if nxt <= config.ttl_threshold else config.net_diameter


def ring_sequence(config: AodvConfig, with_retries: bool = False) -> list[int]:
    """Ring TTLs of one discovery, up to the first network-wide search."""
    seq = [next_ttl(None, config)]
    while seq[-1] < config.net_diameter:
        seq.append(next_ttl(seq[-1], config))
    if with_retries:
        seq += [config.net_diameter] * config.rreq_retries
    return seq


def ring_timeout(ttl: int, config: AodvConfig) -> float:
    return 2 * ttl * config.node_traversal_time


class Route:
    __slots__ = ("dest", "next_hop", "hops", "seq", "valid_seq", "expires", "state", "precursors")

    def __init__(self, dest, next_hop, hops, seq, valid_seq, expires, state=VALID):
        self.dest = dest
        self.next_hop = next_hop
        self.hops = hops
        self.seq = seq
        self.valid_seq = valid_seq
        self.expires = expires
        self.state = state
        self.precursors: set[int] = set()

    def __repr__(self) -> str:
        return (f"Route(dest={self.dest}, nh={self.next_hop}, hops={self.hops}, "
                f"seq={self.seq}, {self.state}, exp={self.expires:.3f})")


class Rreq:
    __slots__ = ("orig", "orig_seq", "rreq_id", "dest", "dest_seq", "unknown_seq", "hops", "ttl", "grat")

    def __init__(self, orig, orig_seq, rreq_id, dest, dest_seq, unknown_seq, hops, ttl, grat):
        self.orig = orig
        self.orig_seq = orig_seq
        self.rreq_id = rreq_id
        self.dest = dest
        self.dest_seq = dest_seq
        self.unknown_seq = unknown_seq
        self.hops = hops
        self.ttl = ttl
        self.grat = grat

    def copy(self, **kw) -> Rreq:
        m = Rreq(self.orig, self.orig_seq, self.rreq_id, self.dest, self.dest_seq,
                 self.unknown_seq, self.hops, self.ttl, self.grat)
        for k, v in kw.items():
            setattr(m, k, v)
        return m

    def __repr__(self) -> str:
        return f"RREQ({self.orig}#{self.rreq_id}->{self.dest}, ttl={self.ttl}, hops={self.hops})"


class Rrep:
    __slots__ = ("dest", "dest_seq", "orig", "hops", "lifetime", "hello")

    def __init__(self, dest, dest_seq, orig, hops, lifetime, hello=False):
        self.dest = dest
        self.dest_seq = dest_seq
        self.orig = orig
        self.hops = hops
        self.lifetime = lifetime
        self.hello = hello

    def __repr__(self) -> str:
        kind = "HELLO" if self.hello else "RREP"
        return f"{kind}(dest={self.dest}, orig={self.orig}, hops={self.hops})"


class Rerr:
    __slots__ = ("unreachable",)

    def __init__(self, unreachable):
        self.unreachable = unreachable

    @property
    def size(self) -> int:
        return 4 + 8 * len(self.unreachable)

    def __repr__(self) -> str:
        return f"RERR({self.unreachable})"


class AodvAgent(RoutingAgent):
    name = "aodv"

    def __init__(self, node, engine, mac, ledger, rng, config: AodvConfig = AodvConfig()):
        super().__init__(node, engine, mac, ledger, rng)
        self.config = config
        self.seq = 0
        self.rreq_id = 0
        self.routes: dict[int, Route] = {}
        self.seen: dict[tuple[int, int], tuple[float, int]] = {}   # -> (first seen, best hops)
        self._pending: dict[tuple[int, int], Rreq] = {}
        self.buffer = SendBuffer(config.buffer_capacity, config.buffer_timeout)
        self.discovery: dict[int, dict] = {}
        self.repairs: dict[int, object] = {}
        self.last_heard: dict[int, float] = {}
        self.last_active = float("-inf")
        self.ttl_log: list[tuple[int, int]] = []
        self._rerr_times: deque[float] = deque()
        self.counters = {"rreq": 0, "rrep": 0, "grat_rrep": 0, "rerr": 0, "hello": 0, "repair": 0}

    # -- setup -----------------------------------------------------------
    def start(self) -> None:
        if self.config.hello_enabled:
            phase = self.rng.uniform(0.0, self.config.hello_interval)
            self.later(phase, self._hello_tick)

    # -- route table -----------------------------------------------------
    def valid_route(self, dest: int) -> Route | None:
        r = self.routes.get(dest)
        if r is None or r.state != VALID:
            return None
        if r.expires <= self.engine.now:
            r.state = INVALID
            return None
        return r

    def _touch(self, dest: int, lifetime: float) -> None:
        r = self.routes.get(dest)
        if r is not None and r.state == VALID:
            r.expires = max(r.expires, self.engine.now + lifetime)

    def _neighbor_route(self, nb: int, lifetime: float, seq: int | None = None) -> None:
        now = self.engine.now
        r = self.routes.get(nb)
        if r is None:
            self.routes[nb] = Route(nb, nb, 1, seq or 0, seq is not None, now + lifetime)
            return
        if r.state != VALID or r.hops != 1 or r.expires <= now:
            r.next_hop, r.hops, r.state = nb, 1, VALID
            r.expires = now + lifetime
        else:
            r.expires = max(r.expires, now + lifetime)
        if seq is not None and (not r.valid_seq or seq > r.seq):
            r.seq, r.valid_seq = seq, True

    def _update(self, dest: int, next_hop: int, hops: int, seq: int, lifetime: float) -> bool:
        """Install or improve a route; True if the entry changed."""
        now = self.engine.now
        r = self.routes.get(dest)
        if r is None:
            self.routes[dest] = Route(dest, next_hop, hops, seq, True, now + lifetime)
            return True
        fresh = r.state == VALID and r.expires > now
        if (not r.valid_seq or seq > r.seq or not fresh
                or (seq == r.seq and hops < r.hops)):
            if r.valid_seq and seq < r.seq:
                return False
            r.next_hop, r.hops, r.seq, r.valid_seq, r.state = next_hop, hops, seq, True, VALID
            r.expires = max(r.expires, now + lifetime) if fresh else now + lifetime
            return True
        return False

    @property
    def active(self) -> bool:
        return self.engine.now - self.last_active <= self.config.active_route_timeout

    # -- data path ---------------------------------------------------------
    def send_data(self, pkt: DataPacket) -> None:
        self.last_active = self.engine.now
        r = self.valid_route(pkt.dst)
        if r is not None:
            self._forward(pkt, r)
            return
        self._buffer(pkt)
        if pkt.dst not in self.discovery:
            self._originate(pkt.dst)

    def _buffer(self, pkt: DataPacket) -> None:
        for old in self.buffer.push(pkt, self.engine.now):
            self.drop(old, "buffer")

    def _forward(self, pkt: DataPacket, r: Route) -> None:
        art = self.config.active_route_timeout
        r.expires = max(r.expires, self.engine.now + art)
        self._touch(r.next_hop, art)
        self._touch(pkt.src, art)
        self.last_active = self.engine.now
        self.send_frame(r.next_hop, DATA, pkt.size, pkt)

    def _on_data(self, pkt: DataPacket, prev: int) -> None:
        pkt.hops += 1
        self.last_active = self.engine.now
        art = self.config.active_route_timeout
        self._neighbor_route(prev, art)
        if pkt.dst == self.node:
            self._touch(pkt.src, art)
            self.deliver(pkt)
            return
        pkt.ttl -= 1
        if pkt.ttl <= 0:
            self.drop(pkt, "ttl")
            return
        r = self.valid_route(pkt.dst)
        if r is not None:
            r.precursors.add(prev)
            self._forward(pkt, r)
            return
        if pkt.dst in self.repairs:
            self._buffer(pkt)
            return
        self.drop(pkt, "no_route")
        stale = self.routes.get(pkt.dst)
        seq = stale.seq if stale is not None else 0
        self._send_rerr([(pkt.dst, seq)], {BROADCAST})

    def _flush(self, dest: int) -> None:
        fresh, expired = self.buffer.take(dest, self.engine.now)
        for p in expired:
            self.drop(p, "buffer_timeout")
        for p in fresh:
            r = self.valid_route(dest)
            if r is None:
                self._buffer(p)
            else:
                self._forward(p, r)

    # -- route discovery ---------------------------------------------------
    def _originate(self, dest: int, ttl: int | None = None, state: dict | None = None) -> None:
        cfg = self.config
        if state is None:
            state = {"ttl": None, "netwide": 0}
            self.discovery[dest] = state
        ttl = next_ttl(state["ttl"], cfg) if ttl is None else ttl
        if state["ttl"] is not None and state["ttl"] >= cfg.net_diameter:
            state["netwide"] += 1
        state["ttl"] = ttl
        self._broadcast_rreq(dest, ttl)
        timeout = ring_timeout(ttl, cfg)
        if ttl >= cfg.net_diameter:
            timeout *= 2 ** state["netwide"]
        state["timer"] = self.later(timeout, self._ring_expired, dest)

    def _broadcast_rreq(self, dest: int, ttl: int) -> None:
        self.seq += 1
        self.rreq_id += 1
        known = self.routes.get(dest)
        dseq = known.seq if known is not None and known.valid_seq else 0
        msg = Rreq(self.node, self.seq, self.rreq_id, dest, dseq, known is None or not known.valid_seq,
                   0, ttl, self.config.gratuitous_rrep)
        self.seen[(self.node, self.rreq_id)] = (self.engine.now, 0)
        self.ttl_log.append((dest, ttl))
        self.counters["rreq"] += 1
        self.broadcast_control(msg, RREQ_SIZE)

    def _ring_expired(self, dest: int) -> None:
        state = self.discovery.get(dest)
        if state is None:
            return
        if self.valid_route(dest) is not None:
            del self.discovery[dest]
            self._flush(dest)
            return
        fresh, expired = self.buffer.take(dest, self.engine.now)
        for p in expired:
            self.drop(p, "buffer_timeout")
        if not fresh:
            del self.discovery[dest]
            return
        for p in fresh:
            self.buffer.push(p, self.engine.now)
        if state["ttl"] >= self.config.net_diameter and state["netwide"] >= self.config.rreq_retries:
            del self.discovery[dest]
            fresh, _ = self.buffer.take(dest, self.engine.now)
            for p in fresh:
                self.drop(p, "no_route")
            return
        self._originate(dest, state=state)

    def _on_rreq(self, msg: Rreq, prev: int) -> None:
        cfg = self.config
        now = self.engine.now
        self._neighbor_route(prev, cfg.active_route_timeout)
        if msg.orig == self.node:
            return
        hops = msg.hops + 1
        key = (msg.orig, msg.rreq_id)
        seen = self.seen.get(key)
        if seen is not None and hops >= seen[1]:
            return      # duplicate
        # a copy with strictly fewer hops is processed again, so the flood
        # settles on shortest paths even when a longer copy arrived first
        if seen is None and len(self.seen) > 4096:
            self._prune_seen()
        self.seen[key] = (seen[0] if seen is not None else now, hops)
        lifetime = max(2 * cfg.net_traversal_time - 2 * hops * cfg.node_traversal_time,
                       cfg.active_route_timeout)
        self._update(msg.orig, prev, hops, msg.orig_seq, lifetime)
        if msg.dest == self.node:
            self._reply_as_dest(msg, prev, bump=seen is None)
            return
        r = self.valid_route(msg.dest)
        if (cfg.intermediate_reply and r is not None and r.valid_seq
                and (msg.unknown_seq or r.seq >= msg.dest_seq) and r.next_hop != prev):
            self._reply_as_intermediate(msg, prev, r)
            return
        if msg.ttl > 1:
            dseq = max(msg.dest_seq, r.seq if r is not None else 0)
            pending = self._pending.get(key)
            if pending is not None:
                # the earlier copy is still waiting out its jitter: send this one instead
                pending.hops, pending.ttl, pending.dest_seq = hops, msg.ttl - 1, dseq
                return
            fwd = msg.copy(hops=hops, ttl=msg.ttl - 1, dest_seq=dseq)
            self._pending[key] = fwd
            self.later(self.rng.uniform(0.0, cfg.jitter), self._rebroadcast, fwd)

    def _prune_seen(self) -> None:
        horizon = self.engine.now - self.config.path_discovery_time
        self.seen = {k: v for k, v in self.seen.items() if v[0] >= horizon}

    def _rebroadcast(self, msg: Rreq) -> None:
        self._pending.pop((msg.orig, msg.rreq_id), None)
        self.broadcast_control(msg, RREQ_SIZE)

    def _reply_as_dest(self, msg: Rreq, prev: int, bump: bool) -> None:
        if bump:
            self.seq = max(self.seq + 1, msg.dest_seq)
        rrep = Rrep(self.node, self.seq, msg.orig, 0, 2 * self.config.active_route_timeout)
        self.counters["rrep"] += 1
        self.unicast_control(prev, rrep, RREP_SIZE)

    def _reply_as_intermediate(self, msg: Rreq, prev: int, r: Route) -> None:
        now = self.engine.now
        rrep = Rrep(msg.dest, r.seq, msg.orig, r.hops, r.expires - now)
        r.precursors.add(prev)
        rev = self.routes.get(msg.orig)
        if rev is not None:
            rev.precursors.add(r.next_hop)
        self.counters["rrep"] += 1
        self.unicast_control(prev, rrep, RREP_SIZE)
        if msg.grat and rev is not None:
            g = Rrep(msg.orig, msg.orig_seq, msg.dest, rev.hops, rev.expires - now)
            self.counters["grat_rrep"] += 1
            self.unicast_control(r.next_hop, g, RREP_SIZE)

    def _on_rrep(self, msg: Rrep, prev: int) -> None:
        cfg = self.config
        if msg.hello:
            self._neighbor_route(prev, cfg.allowed_hello_loss * cfg.hello_interval, msg.dest_seq)
            return
        self._neighbor_route(prev, cfg.active_route_timeout)
        hops = msg.hops + 1
        changed = self._update(msg.dest, prev, hops, msg.dest_seq, msg.lifetime)
        if msg.orig == self.node:
            if self.valid_route(msg.dest) is None:
                return
            st = self.discovery.pop(msg.dest, None)
            if st is not None:
                self.engine.cancel(st["timer"])
            ev = self.repairs.pop(msg.dest, None)
            if ev is not None:
                self.engine.cancel(ev)
            self._flush(msg.dest)
            return
        if not changed:
            return
        rev = self.valid_route(msg.orig)
        if rev is None:
            return
        fwd = self.routes[msg.dest]
        fwd.precursors.add(rev.next_hop)
        rev.precursors.add(prev)
        rev.expires = max(rev.expires, self.engine.now + cfg.active_route_timeout)
        out = Rrep(msg.dest, msg.dest_seq, msg.orig, hops, msg.lifetime)
        self.unicast_control(rev.next_hop, out, RREP_SIZE)

    def _on_rerr(self, msg: Rerr, prev: int) -> None:
        lost = []
        precursors: set[int] = set()
        for dest, seq in msg.unreachable:
            r = self.routes.get(dest)
            if r is None or r.next_hop != prev or r.state == INVALID:
                continue
            r.state = INVALID
            r.seq = max(r.seq, seq)
            lost.append((dest, r.seq))
            precursors |= r.precursors
        if lost and precursors:
            self._send_rerr(lost, precursors)

    def _send_rerr(self, lost, precursors: set[int]) -> None:
        now = self.engine.now
        times = self._rerr_times
        while times and now - times[0] >= 1.0:
            times.popleft()
        if len(times) >= self.config.rerr_rate_limit:
            return
        times.append(now)
        msg = Rerr(list(lost))
        self.counters["rerr"] += 1
        if len(precursors) == 1:
            (p,) = precursors
            if p != BROADCAST:
                self.unicast_control(p, msg, msg.size)
                return
        self.broadcast_control(msg, msg.size)

    # -- maintenance ---------------------------------------------------------
    def _hello_tick(self) -> None:
        cfg = self.config
        if self.active:
            self.counters["hello"] += 1
            hello = Rrep(self.node, self.seq, self.node, 0,
                         cfg.allowed_hello_loss * cfg.hello_interval, hello=True)
            self.broadcast_control(hello, RREP_SIZE)
            self._check_neighbors()
        self.later(cfg.hello_interval, self._hello_tick)

    def _check_neighbors(self) -> None:
        now = self.engine.now
        limit = self.config.allowed_hello_loss * self.config.hello_interval
        hops = sorted({r.next_hop for r in self.routes.values()
                       if r.state == VALID and r.expires > now})
        for nb in hops:
            heard = self.last_heard.get(nb)
            if heard is not None and now - heard > limit:
                self.link_broken(nb)

    def tx_failed(self, frame: Frame) -> None:
        nh = frame.dst
        if nh == BROADCAST:
            return
        pkt = frame.payload if frame.kind == DATA else None
        self.link_broken(nh, pkt)
        if frame.kind == CONTROL:
            return

    def link_broken(self, nh: int, pkt: DataPacket | None = None) -> None:
        """Handle loss of the link to ``nh``; ``pkt`` is the data packet that failed, if any."""
        cfg = self.config
        now = self.engine.now
        repair_dest = None
        if pkt is not None and cfg.local_repair and pkt.src != self.node:
            r = self.routes.get(pkt.dst)
            if (r is not None and r.next_hop == nh and r.state == VALID
                    and r.hops < pkt.hops and r.hops <= cfg.max_repair_ttl
                    and pkt.dst not in self.repairs):
                repair_dest = pkt.dst
        lost = []
        precursors: set[int] = set()
        for r in self.routes.values():
            if r.next_hop != nh or r.state != VALID:
                continue
            if r.dest == repair_dest:
                continue
            r.state = INVALID
            r.seq += 1
            lost.append((r.dest, r.seq))
            precursors |= r.precursors
        self.last_heard.pop(nh, None)
        if repair_dest is not None:
            self._start_repair(repair_dest)
        if lost and precursors:
            self._send_rerr(lost, precursors)
        pending = [pkt] if pkt is not None else []
        pending += [f.payload for f in self.mac.purge(nh) if f.kind == DATA]
        for p in pending:
            self._reroute(p)

    def _reroute(self, pkt: DataPacket) -> None:
        r = self.valid_route(pkt.dst)
        if r is not None:
            self._forward(pkt, r)
        elif pkt.dst in self.repairs:
            self._buffer(pkt)
        elif pkt.src == self.node:
            self._buffer(pkt)
            if pkt.dst not in self.discovery:
                self._originate(pkt.dst)
        else:
            self.drop(pkt, "link_break")

    def _start_repair(self, dest: int) -> None:
        cfg = self.config
        r = self.routes[dest]
        r.state = REPAIR
        r.seq += 1
        ttl = max(r.hops, int(0.5 * r.hops)) + cfg.local_add_ttl
        self.counters["repair"] += 1
        self._broadcast_rreq(dest, ttl)
        self.repairs[dest] = self.later(ring_timeout(ttl, cfg), self._repair_expired, dest)

    def _repair_expired(self, dest: int) -> None:
        self.repairs.pop(dest, None)
        if self.valid_route(dest) is not None:
            self._flush(dest)
            return
        r = self.routes.get(dest)
        if r is not None:
            r.state = INVALID
            if r.precursors:
                self._send_rerr([(dest, r.seq)], set(r.precursors))
        fresh, expired = self.buffer.take(dest, self.engine.now)
        for p in fresh + expired:
            if p.src == self.node:
                self._buffer(p)
            else:
                self.drop(p, "repair_failed")
        if dest in self.buffer and dest not in self.discovery:
            self._originate(dest)

    # -- MAC upcalls -----------------------------------------------------------
    def receive(self, frame: Frame) -> None:
        prev = frame.src
        self.last_heard[prev] = self.engine.now
        msg = frame.payload
        if frame.kind == DATA:
            self._on_data(msg, prev)
        elif isinstance(msg, Rreq):
            self._on_rreq(msg, prev)
        elif isinstance(msg, Rrep):
            self._on_rrep(msg, prev)
        elif isinstance(msg, Rerr):
            self._on_rerr(msg, prev)
