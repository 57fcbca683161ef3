"""DSR: source routing with a bounded LRU path cache, salvaging and
gratuitous replies from promiscuous overhearing. MOD DSR shrinks the cache."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

from ..packets import CONTROL, DATA, DataPacket, Frame
from .base import RoutingAgent, SendBuffer


class LoopError(ValueError):
    pass


def loop_free(route) -> bool:
    return len(set(route)) == len(route)


@dataclass(frozen=True)
class DsrConfig:
    cache_capacity: int = 1024
    promiscuous: bool = True
    reply_from_cache: bool = True
    nonpropagating_first: bool = True
    nonprop_timeout: float = 0.03
    request_timeout: float = 0.5
    max_request_timeout: float = 16.0
    max_requests: int = 16
    max_salvage: int = 15
    max_ttl: int = 255
    buffer_capacity: int = 64
    buffer_timeout: float = 30.0
    jitter: float = 0.01
    reply_jitter: float = 0.01
    # cache replies wait holdoff * (hops - 1 + U[0,1)) so shorter answers go first
    reply_holdoff: float = 0.01
    grat_holdoff: float = 1.0

    def __post_init__(self):
        if self.cache_capacity < 1:
            raise ValueError("cache_capacity must be >= 1")
        if self.max_salvage < 0:
            raise ValueError("max_salvage must be non-negative")
        if self.request_timeout <= 0 or self.max_request_timeout < self.request_timeout:
            raise ValueError("invalid request timeouts")


DSR_PRESETS = {
    "dsr": DsrConfig(),
    "mod-dsr": DsrConfig(cache_capacity=256),
}


class CacheEntry:
    __slots__ = ("route", "inserted", "last_used", "stamp")

    def __init__(self, route, inserted, stamp):
        self.route = route
        self.inserted = inserted
        self.last_used = inserted
        self.stamp = stamp


class RouteCache:
    """Path cache holding full routes; any prefix of a stored route is usable.

    Eviction is least-recently-used; lookups and re-insertions both count
    as use.
    """

    def __init__(self, capacity: int = 1024):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: OrderedDict[tuple, CacheEntry] = OrderedDict()
        self._index: dict[int, dict[tuple, int]] = {}
        self._links: dict[tuple[int, int], set] = {}
        self._stamp = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, route) -> bool:
        return tuple(route) in self._entries

    def routes(self) -> list[tuple]:
        """Stored routes, least recently used first."""
        return list(self._entries)

    def _use(self, e: CacheEntry, now: float) -> None:
        self._stamp += 1
        e.stamp = self._stamp
        e.last_used = now
        self._entries.move_to_end(e.route)

    def insert(self, route, now: float) -> tuple | None:
        """Store ``route``; returns the evicted route, if any."""
        route = tuple(route)
        if len(route) < 2:
            raise ValueError("a route needs at least two nodes")
        if not loop_free(route):
            raise LoopError(f"route {route} revisits a node")
        e = self._entries.get(route)
        if e is not None:
            self._use(e, now)
            return None
        victim = None
        if len(self._entries) >= self.capacity:
            victim, _ = self._entries.popitem(last=False)
            self._unindex(victim)
        self._stamp += 1
        self._entries[route] = CacheEntry(route, now, self._stamp)
        for i, n in enumerate(route):
            self._index.setdefault(n, {})[route] = i
        links = self._links
        for a, b in zip(route, route[1:]):
            key = (a, b) if a < b else (b, a)
            links.setdefault(key, set()).add(route)
        return victim

    def _unindex(self, route: tuple) -> None:
        for n in route:
            d = self._index.get(n)
            if d is not None:
                d.pop(route, None)
                if not d:
                    del self._index[n]
        for a, b in zip(route, route[1:]):
            key = (a, b) if a < b else (b, a)
            rs = self._links.get(key)
            if rs is not None:
                rs.discard(route)
                if not rs:
                    del self._links[key]

    def remove(self, route) -> None:
        route = tuple(route)
        if self._entries.pop(route, None) is not None:
            self._unindex(route)

    def lookup(self, dest: int, now: float) -> list | None:
        """Fewest-hop stored route (or prefix) reaching ``dest``; ties go to the most recently used."""
        cands = self._index.get(dest)
        if not cands:
            return None
        best = None
        best_key = None
        for route, pos in cands.items():
            if pos == 0:
                continue
            key = (pos, -self._entries[route].stamp)
            if best_key is None or key < best_key:
                best, best_key = route, key
        if best is None:
            return None
        self._use(self._entries[best], now)
        return list(best[:best_key[0] + 1])

    def peek(self, dest: int) -> list | None:
        """Like :meth:`lookup` without refreshing recency."""
        cands = self._index.get(dest)
        if not cands:
            return None
        found = [(pos, -self._entries[r].stamp, r) for r, pos in cands.items() if pos > 0]
        if not found:
            return None
        pos, _, r = min(found)
        return list(r[:pos + 1])

    def hops_to(self, dest: int) -> int | None:
        """Hop count of the shortest stored route (or prefix) to ``dest``."""
        cands = self._index.get(dest)
        if not cands:
            return None
        return min((pos for pos in cands.values() if pos > 0), default=None)

    def remove_link(self, u: int, v: int) -> int:
        """Drop every route using the link u-v in either direction."""
        dead = self._links.get((u, v) if u < v else (v, u))
        if not dead:
            return 0
        # routes are ordered so the result does not depend on set iteration
        dead = sorted(dead)
        for r in dead:
            self.remove(r)
        return len(dead)


class DsrRreq:
    __slots__ = ("initiator", "target", "rid", "path", "ttl")

    def __init__(self, initiator, target, rid, path, ttl):
        self.initiator = initiator
        self.target = target
        self.rid = rid
        self.path = path
        self.ttl = ttl

    @property
    def size(self) -> int:
        return 8 + 4 * len(self.path)

    def __repr__(self) -> str:
        return f"DSR-RREQ({self.initiator}#{self.rid}->{self.target}, path={self.path}, ttl={self.ttl})"


class DsrRrep:
    """Reply carrying ``route``; travels hop by hop along ``back``."""

    __slots__ = ("route", "back", "idx", "grat")

    def __init__(self, route, back, grat=False):
        self.route = tuple(route)
        self.back = tuple(back)
        self.idx = 0
        self.grat = grat

    @property
    def size(self) -> int:
        return 8 + 4 * (len(self.route) + len(self.back))

    def __repr__(self) -> str:
        return f"DSR-RREP(route={self.route}, back={self.back}, idx={self.idx})"


class DsrRerr:
    __slots__ = ("u", "v", "back", "idx")

    def __init__(self, u, v, back):
        self.u = u
        self.v = v
        self.back = tuple(back)
        self.idx = 0

    @property
    def size(self) -> int:
        return 12 + 4 * len(self.back)

    def __repr__(self) -> str:
        return f"DSR-RERR({self.u}-{self.v}, back={self.back})"


class DsrAgent(RoutingAgent):
    name = "dsr"

    def __init__(self, node, engine, mac, ledger, rng, config: DsrConfig = DsrConfig()):
        super().__init__(node, engine, mac, ledger, rng)
        self.config = config
        self.promiscuous = config.promiscuous
        self.cache = RouteCache(config.cache_capacity)
        self.buffer = SendBuffer(config.buffer_capacity, config.buffer_timeout)
        self.rid = 0
        self.seen: dict[tuple[int, int], int] = {}     # request -> shortest path length seen
        self._pending: dict[tuple[int, int], DsrRreq] = {}
        self._pending_reply: dict[tuple[int, int], DsrRrep] = {}
        self.discovery: dict[int, dict] = {}
        self.grat_sent: dict[tuple[int, int], float] = {}
        self._learned: dict[tuple, float] = {}
        self.counters = {"rreq": 0, "rrep": 0, "grat_rrep": 0, "rerr": 0, "salvaged": 0}

    # -- cache helpers ---------------------------------------------------------
    def learn(self, route) -> None:
        """Cache a route that starts at this node."""
        if len(route) >= 2 and route[0] == self.node:
            try:
                self.cache.insert(route, self.engine.now)
            except LoopError:
                pass

    def _recent(self, key) -> bool:
        """True if ``key`` was seen within the holdoff; records it otherwise.

        A CBR stream repeats the same source route many times a second, so
        learning from every copy is wasted work.
        """
        now = self.engine.now
        last = self._learned.get(key)
        if last is not None and now - last < self.config.grat_holdoff:
            return True
        if len(self._learned) > 4096:
            self._learned.clear()
        self._learned[key] = now
        return False

    def _learn_around(self, route, k: int, via_self: bool = False) -> None:
        """Learn both directions of ``route`` as seen from position ``k``.

        With ``via_self`` the node is not on the route but heard ``route[k]``.
        """
        route = tuple(route)
        if self._recent((route, k, via_self)):
            return
        me = self.node
        if via_self:
            fwd = (me,) + route[k:]
            back = (me,) + tuple(reversed(route[:k + 1]))
        else:
            fwd = route[k:]
            back = tuple(reversed(route[:k + 1]))
        if me not in fwd[1:]:
            self.learn(fwd)
        if me not in back[1:]:
            self.learn(back)

    # -- data path ---------------------------------------------------------------
    def send_data(self, pkt: DataPacket) -> None:
        route = self.cache.lookup(pkt.dst, self.engine.now)
        if route is not None:
            self._send_routed(pkt, route)
            return
        self._buffer(pkt)
        if pkt.dst not in self.discovery:
            self._discover(pkt.dst)

    def _buffer(self, pkt: DataPacket) -> None:
        for old in self.buffer.push(pkt, self.engine.now):
            self.drop(old, "buffer")

    def _send_routed(self, pkt: DataPacket, route) -> None:
        pkt.route = tuple(route)
        pkt.route_idx = 0
        self._transmit(pkt)

    def _transmit(self, pkt: DataPacket) -> None:
        nxt = pkt.route[pkt.route_idx + 1]
        self.send_frame(nxt, DATA, pkt.size + 4 + 4 * len(pkt.route), pkt)

    def _on_data(self, pkt: DataPacket, prev: int) -> None:
        pkt.hops += 1
        pkt.route_idx += 1
        route = pkt.route
        if route[pkt.route_idx] != self.node:
            self.drop(pkt, "bad_header")
            return
        self._learn_around(route, pkt.route_idx)
        if pkt.dst == self.node:
            self.deliver(pkt)
            return
        pkt.ttl -= 1
        if pkt.ttl <= 0:
            self.drop(pkt, "ttl")
            return
        self._transmit(pkt)

    def _flush(self, dest: int) -> None:
        fresh, expired = self.buffer.take(dest, self.engine.now)
        for p in expired:
            self.drop(p, "buffer_timeout")
        for p in fresh:
            route = self.cache.lookup(dest, self.engine.now)
            if route is None:
                self._buffer(p)
            else:
                self._send_routed(p, route)

    # -- discovery -----------------------------------------------------------------
    def _discover(self, dest: int) -> None:
        st = {"attempt": 0}
        self.discovery[dest] = st
        if self.config.nonpropagating_first:
            self._send_rreq(dest, 1)
            st["timer"] = self.later(self.config.nonprop_timeout, self._request_expired, dest)
        else:
            self._propagating(dest, st)

    def _propagating(self, dest: int, st: dict) -> None:
        cfg = self.config
        timeout = min(cfg.request_timeout * 2 ** st["attempt"], cfg.max_request_timeout)
        st["attempt"] += 1
        self._send_rreq(dest, cfg.max_ttl)
        st["timer"] = self.later(timeout, self._request_expired, dest)

    def _send_rreq(self, dest: int, ttl: int) -> None:
        self.rid += 1
        self.seen[(self.node, self.rid)] = 1
        msg = DsrRreq(self.node, dest, self.rid, (self.node,), ttl)
        self.counters["rreq"] += 1
        self.broadcast_control(msg, msg.size)

    def _request_expired(self, dest: int) -> None:
        st = self.discovery.get(dest)
        if st is None:
            return
        now = self.engine.now
        if self.cache.hops_to(dest) is not None:
            del self.discovery[dest]
            self._flush(dest)
            return
        for p in self.buffer.expire_all(now):
            self.drop(p, "buffer_timeout")
        if dest not in self.buffer:
            del self.discovery[dest]
            return
        if st["attempt"] >= self.config.max_requests:
            del self.discovery[dest]
            fresh, expired = self.buffer.take(dest, now)
            for p in fresh + expired:
                self.drop(p, "no_route")
            return
        self._propagating(dest, st)

    def _on_rreq(self, msg: DsrRreq, prev: int) -> None:
        me = self.node
        if msg.initiator == me or me in msg.path:
            return
        path = msg.path + (me,)
        self._learn_around(path, len(path) - 1)
        key = (msg.initiator, msg.rid)
        best = self.seen.get(key)
        if msg.target == me:
            # answer the first copy and any strictly shorter one
            if best is None or len(path) < best:
                self.seen[key] = len(path)
                self._reply(path, tuple(reversed(path)))
            return
        if best is not None and len(path) >= best:
            return      # duplicate; a strictly shorter copy is handled again
        self.seen[key] = len(path)
        if self.config.reply_from_cache:
            cached = self.cache.peek(msg.target)
            if cached is not None:
                full = path + tuple(cached[1:])
                if loop_free(full):
                    self._cache_reply(key, full, tuple(reversed(path)))
                    return
        if msg.ttl > 1:
            pending = self._pending.get(key)
            if pending is not None:
                pending.path, pending.ttl = path, msg.ttl - 1
                return
            fwd = DsrRreq(msg.initiator, msg.target, msg.rid, path, msg.ttl - 1)
            self._pending[key] = fwd
            self.later(self.rng.uniform(0.0, self.config.jitter), self._rebroadcast, fwd)

    def _rebroadcast(self, msg: DsrRreq) -> None:
        self._pending.pop((msg.initiator, msg.rid), None)
        self.broadcast_control(msg, msg.size)

    def _reply(self, route, back) -> None:
        rrep = DsrRrep(route, back)
        self.counters["rrep"] += 1
        self.later(self.rng.uniform(0.0, self.config.reply_jitter), self._send_rrep, rrep)

    def _cache_reply(self, key, route, back) -> None:
        pending = self._pending_reply.get(key)
        if pending is not None:
            # a shorter request copy arrived while the reply was held back
            if len(route) < len(pending.route):
                pending.route, pending.back = tuple(route), tuple(back)
            return
        rrep = DsrRrep(route, back)
        self._pending_reply[key] = rrep
        delay = self.config.reply_holdoff * (len(route) - 2 + self.rng.random())
        self.later(delay, self._send_cache_reply, key, rrep)

    def _send_cache_reply(self, key, rrep: DsrRrep) -> None:
        if self._pending_reply.get(key) is not rrep:
            return      # cancelled
        del self._pending_reply[key]
        self.counters["rrep"] += 1
        self._send_rrep(rrep)

    def _cancel_replies(self, initiator: int, target: int, hops: int) -> None:
        """Drop held cache replies the initiator no longer needs."""
        for key, rrep in list(self._pending_reply.items()):
            if key[0] == initiator and rrep.route[-1] == target and hops <= len(rrep.route) - 1:
                del self._pending_reply[key]

    def _send_rrep(self, rrep: DsrRrep) -> None:
        self.unicast_control(rrep.back[rrep.idx + 1], rrep, rrep.size)

    def _on_rrep(self, msg: DsrRrep, prev: int) -> None:
        idx = msg.back.index(self.node) if self.node in msg.back else -1
        if idx < 0:
            return
        route = msg.route
        if self.node in route:
            self._learn_around(route, route.index(self.node))
        if idx == len(msg.back) - 1:
            # initiator
            dest = route[-1]
            st = self.discovery.pop(dest, None)
            if st is not None:
                self.engine.cancel(st["timer"])
            self._flush(dest)
            return
        fwd = DsrRrep(route, msg.back, msg.grat)
        fwd.idx = idx
        self.unicast_control(msg.back[idx + 1], fwd, fwd.size)

    def _on_rerr(self, msg: DsrRerr, prev: int) -> None:
        self.cache.remove_link(msg.u, msg.v)
        if self.node not in msg.back:
            return
        idx = msg.back.index(self.node)
        if idx == len(msg.back) - 1:
            return
        fwd = DsrRerr(msg.u, msg.v, msg.back)
        fwd.idx = idx
        self.unicast_control(msg.back[idx + 1], fwd, fwd.size)

    # -- maintenance -----------------------------------------------------------------
    def tx_failed(self, frame: Frame) -> None:
        v = frame.dst
        self.cache.remove_link(self.node, v)
        failed = [frame] + [f for f in self.mac.purge(v)]
        notified: set[int] = set()
        for f in failed:
            if f.kind == DATA:
                self.salvage(f.payload, v, notified)

    def salvage(self, pkt: DataPacket, broken: int, notified: set | None = None) -> bool:
        """Recover ``pkt`` after the link to ``broken`` failed. True if re-sent."""
        me = self.node
        now = self.engine.now
        self.cache.remove_link(me, broken)
        if pkt.src == me and pkt.salvage == 0:
            route = self.cache.lookup(pkt.dst, now)
            if route is not None:
                self._send_routed(pkt, route)
                return True
            self._buffer(pkt)
            if pkt.dst not in self.discovery:
                self._discover(pkt.dst)
            return False
        # report the broken link to the packet's source
        src = pkt.route[0]
        if src != me and (notified is None or src not in notified):
            back = tuple(reversed(pkt.route[:pkt.route_idx + 1]))
            if back[0] == me and len(back) >= 2:
                err = DsrRerr(me, broken, back)
                self.counters["rerr"] += 1
                self.unicast_control(back[1], err, err.size)
            if notified is not None:
                notified.add(src)
        if pkt.salvage < self.config.max_salvage:
            route = self.cache.lookup(pkt.dst, now)
            if route is not None:
                pkt.salvage += 1
                self.counters["salvaged"] += 1
                self._send_routed(pkt, route)
                return True
        self.drop(pkt, "link_break")
        return False

    def overhear(self, frame: Frame) -> None:
        if not self.config.promiscuous:
            return
        u = frame.src
        msg = frame.payload
        if frame.kind == DATA:
            route = msg.route
            i = msg.route_idx
            if route is None or route[i] != u:
                return
            if self._pending_reply and i == 0:
                self._cancel_replies(u, msg.dst, len(route) - 1)
            me = self.node
            if me in route:
                j = route.index(me)
                if j >= i + 2:
                    self._grat_reply(route[:i + 1] + route[j:], route[0], u)
                return
            if self._recent((route, i, "heard")):
                return
            self._learn_around(route, i, via_self=True)
            h = self.cache.hops_to(msg.dst)
            if h is not None and h + 1 < len(route) - 1 - i:
                short = route[:i + 1] + tuple(self.cache.peek(msg.dst))
                if loop_free(short):
                    self._grat_reply(short, route[0], u)
        elif isinstance(msg, DsrRerr):
            self.cache.remove_link(msg.u, msg.v)
        elif isinstance(msg, DsrRrep):
            route = msg.route
            if u in route and self.node not in route:
                self._learn_around(route, route.index(u), via_self=True)

    def _grat_reply(self, short, src: int, u: int) -> None:
        now = self.engine.now
        key = (src, u)
        last = self.grat_sent.get(key)
        if last is not None and now - last < self.config.grat_holdoff:
            return
        self.grat_sent[key] = now
        short = tuple(short)
        k = short.index(self.node)
        back = tuple(reversed(short[:k + 1]))
        if len(back) < 2:
            return
        rrep = DsrRrep(short, back, grat=True)
        self.counters["grat_rrep"] += 1
        self.unicast_control(back[1], rrep, rrep.size)

    # -- MAC upcalls ---------------------------------------------------------------------
    def receive(self, frame: Frame) -> None:
        msg = frame.payload
        prev = frame.src
        if frame.kind == DATA:
            self._on_data(msg, prev)
        elif isinstance(msg, DsrRreq):
            self._on_rreq(msg, prev)
        elif isinstance(msg, DsrRrep):
            self._on_rrep(msg, prev)
        elif isinstance(msg, DsrRerr):
            self._on_rerr(msg, prev)
        if frame.kind == CONTROL and prev != self.node:
            self.learn((self.node, prev))
