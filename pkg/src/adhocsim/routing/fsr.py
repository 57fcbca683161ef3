"""Fisheye State Routing: periodic sequence-numbered link-state exchange with
two scopes, inner entries sent often, the full table sent rarely.

MOD FSR only shortens the two intervals.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..packets import DATA, DataPacket, Frame
from .base import RoutingAgent

INNER = "inner"
OUTER = "outer"


@dataclass(frozen=True)
class FsrConfig:
    inner_radius: int = 2
    inner_interval: float = 5.0
    outer_interval: float = 15.0
    neighbor_timeout_factor: float = 3.0   # x inner_interval
    entry_expiry_factor: float = 6.0       # x outer_interval

    def __post_init__(self):
        if self.inner_interval <= 0 or self.outer_interval <= 0:
            raise ValueError("FSR intervals must be positive")
        if self.inner_interval >= self.outer_interval:
            raise ValueError("inner_interval must be shorter than outer_interval")
        if self.inner_radius < 1:
            raise ValueError("inner_radius must be >= 1")

    @property
    def neighbor_timeout(self) -> float:
        return self.neighbor_timeout_factor * self.inner_interval

    @property
    def entry_lifetime(self) -> float:
        return self.entry_expiry_factor * self.outer_interval


FSR_PRESETS = {
    "fsr": FsrConfig(),
    "mod-fsr": FsrConfig(inner_interval=1.0, outer_interval=3.0),
}


class TopoEntry:
    __slots__ = ("neighbors", "seq", "last_heard")

    def __init__(self, neighbors, seq, last_heard):
        self.neighbors = neighbors
        self.seq = seq
        self.last_heard = last_heard

    def __repr__(self) -> str:
        return f"TopoEntry(seq={self.seq}, nbrs={self.neighbors})"


class FsrUpdate:
    """Link-state subset: origin -> (seq, neighbour tuple)."""

    __slots__ = ("entries", "full")

    def __init__(self, entries: dict, full: bool):
        self.entries = entries
        self.full = full

    @property
    def size(self) -> int:
        return 8 + sum(6 + 2 * len(nb) for _, nb in self.entries.values())

    def well_formed(self) -> bool:
        if not isinstance(self.entries, dict):
            return False
        for origin, item in self.entries.items():
            if not isinstance(origin, int) or not isinstance(item, tuple) or len(item) != 2:
                return False
            seq, nbrs = item
            if not isinstance(seq, int) or seq < 0 or not isinstance(nbrs, tuple):
                return False
        return True

    def __repr__(self) -> str:
        return f"FsrUpdate({'full' if self.full else 'inner'}, {len(self.entries)} entries)"


def shortest_next_hops(source: int, first_hops, adjacency) -> dict[int, tuple[int, int]]:
    """Breadth-first next hops from ``source``: dest -> (next hop, hop count).

    Equal-length alternatives resolve to the smallest next-hop id.
    """
    dist = {source: 0}
    nh: dict[int, int] = {}
    frontier = []
    for v in sorted(first_hops):
        if v == source:
            continue
        dist[v] = 1
        nh[v] = v
        frontier.append(v)
    d = 1
    while frontier:
        nxt = []
        for u in frontier:
            hop = nh[u]
            for v in adjacency.get(u, ()):
                dv = dist.get(v)
                if dv is None:
                    dist[v] = d + 1
                    nh[v] = hop
                    nxt.append(v)
                elif dv == d + 1 and hop < nh[v]:
                    nh[v] = hop
        frontier = nxt
        d += 1
    return {v: (nh[v], dist[v]) for v in nh}


class FsrAgent(RoutingAgent):
    name = "fsr"

    def __init__(self, node, engine, mac, ledger, rng, config: FsrConfig = FsrConfig()):
        super().__init__(node, engine, mac, ledger, rng)
        self.config = config
        self.seq = 0
        self.topology: dict[int, TopoEntry] = {}
        self.neighbors: dict[int, float] = {}
        self._routes: dict[int, tuple[int, int]] = {}
        self._dirty = True
        self.phase = 0.0
        self.ticks = 0
        self.broadcasts = {INNER: 0, OUTER: 0}
        r = config.outer_interval / config.inner_interval
        self._full_every = round(r) if abs(r - round(r)) < 1e-9 else None
        self._next_full = 0.0

    def start(self) -> None:
        self.phase = self.rng.uniform(0.0, self.config.inner_interval)
        self._next_full = self.phase
        self.engine.schedule(self.engine.now + self.phase, "periodic", self.node, self._tick)

    # -- state -------------------------------------------------------------
    def own_neighbors(self) -> tuple[int, ...]:
        return tuple(sorted(self.neighbors))

    def _heard(self, nb: int) -> None:
        if nb not in self.neighbors:
            self._dirty = True
        self.neighbors[nb] = self.engine.now

    def _expire(self) -> None:
        now = self.engine.now
        limit = self.config.neighbor_timeout
        for nb in [n for n, t in self.neighbors.items() if now - t > limit]:
            del self.neighbors[nb]
            self._dirty = True
        life = self.config.entry_lifetime
        for o in [o for o, e in self.topology.items() if now - e.last_heard > life]:
            del self.topology[o]
            self._dirty = True

    def _refresh(self) -> None:
        # routes are a pure function of the table, so recompute lazily
        if self._dirty:
            adj = {o: e.neighbors for o, e in self.topology.items()}
            self._routes = shortest_next_hops(self.node, self.neighbors, adj)
            self._dirty = False

    def compute_routes(self) -> dict[int, int]:
        """dest -> next hop over the stored link state."""
        self._refresh()
        return {d: nh for d, (nh, _) in self._routes.items()}

    def distance(self, dest: int) -> int | None:
        self._refresh()
        if dest == self.node:
            return 0
        r = self._routes.get(dest)
        return None if r is None else r[1]

    def scope_of(self, dest: int) -> str:
        d = self.distance(dest)
        return INNER if d is not None and d <= self.config.inner_radius else OUTER

    # -- periodic exchange ---------------------------------------------------
    def _tick(self) -> None:
        self._expire()
        now = self.engine.now
        if self._full_every is not None:
            full = self.ticks % self._full_every == 0
        else:
            full = now >= self._next_full
            if full:
                self._next_full += self.config.outer_interval
        self.periodic_update(OUTER if full else INNER)
        self.ticks += 1
        nxt = self.phase + self.ticks * self.config.inner_interval
        self.engine.schedule(nxt, "periodic", self.node, self._tick)

    def periodic_update(self, tier: str) -> FsrUpdate:
        """Broadcast own entry plus the entries of ``tier`` (``outer`` = full table)."""
        self.seq += 1
        entries = {self.node: (self.seq, self.own_neighbors())}
        full = tier == OUTER
        self._refresh()
        radius = self.config.inner_radius
        routes = self._routes
        for o, e in self.topology.items():
            if full or (o in routes and routes[o][1] <= radius):
                entries[o] = (e.seq, e.neighbors)
        msg = FsrUpdate(entries, full)
        self.broadcasts[tier] += 1
        self.broadcast_control(msg, msg.size)
        return msg

    def process_update(self, msg: FsrUpdate, sender: int) -> int:
        """Merge strictly newer entries; returns how many were replaced."""
        if not msg.well_formed():
            return 0
        now = self.engine.now
        self._heard(sender)
        changed = 0
        for origin, (seq, nbrs) in msg.entries.items():
            if origin == self.node:
                continue
            cur = self.topology.get(origin)
            if cur is None:
                self.topology[origin] = TopoEntry(nbrs, seq, now)
                self._dirty = True
                changed += 1
            elif seq > cur.seq:
                if cur.neighbors != nbrs:
                    self._dirty = True
                cur.neighbors, cur.seq, cur.last_heard = nbrs, seq, now
                changed += 1
        return changed

    # -- data ----------------------------------------------------------------
    def send_data(self, pkt: DataPacket) -> None:
        self._route(pkt)

    def _route(self, pkt: DataPacket, reason: str = "no_route") -> None:
        self._refresh()
        r = self._routes.get(pkt.dst)
        if r is None:
            self.drop(pkt, reason)
            return
        self.send_frame(r[0], DATA, pkt.size, pkt)

    def receive(self, frame: Frame) -> None:
        if frame.kind == DATA:
            pkt = frame.payload
            self._heard(frame.src)
            pkt.hops += 1
            if pkt.dst == self.node:
                self.deliver(pkt)
                return
            pkt.ttl -= 1
            if pkt.ttl <= 0:
                self.drop(pkt, "ttl")
                return
            self._route(pkt)
        elif isinstance(frame.payload, FsrUpdate):
            self.process_update(frame.payload, frame.src)

    def tx_failed(self, frame: Frame) -> None:
        nb = frame.dst
        if self.neighbors.pop(nb, None) is not None:
            self._dirty = True
        failed = [frame] + self.mac.purge(nb)
        for f in failed:
            if f.kind == DATA:
                self._route(f.payload, "link_break")
