"""Frames and data packets shared by the MAC and routing layers."""

from __future__ import annotations

BROADCAST = -1

DATA = "data"
CONTROL = "control"


class DataPacket:
    """Application datagram.

    Routing agents attach their own header fields (source route, salvage
    count, ...) directly on the packet.
    """

    __slots__ = ("uid", "src", "dst", "flow", "size", "sent_at", "hops", "counted",
                 "route", "route_idx", "salvage", "ttl")

    def __init__(self, uid: int, src: int, dst: int, size: int, sent_at: float,
                 flow: int = -1, counted: bool = True):
        self.uid = uid
        self.src = src
        self.dst = dst
        self.flow = flow
        self.size = size
        self.sent_at = sent_at
        self.hops = 0
        self.counted = counted
        self.route = None
        self.route_idx = 0
        self.salvage = 0
        self.ttl = 64

    def __repr__(self) -> str:
        return f"DataPacket(uid={self.uid}, {self.src}->{self.dst}, hops={self.hops})"


class Frame:
    __slots__ = ("src", "dst", "kind", "size", "payload", "first_tx_done")

    def __init__(self, src: int, dst: int, kind: str, size: int, payload):
        if size <= 0:
            raise ValueError("frame size must be positive")
        self.src = src
        self.dst = dst
        self.kind = kind
        self.size = size
        self.payload = payload
        self.first_tx_done = False

    @property
    def is_broadcast(self) -> bool:
        return self.dst == BROADCAST

    def __repr__(self) -> str:
        dst = "*" if self.dst == BROADCAST else self.dst
        return f"Frame({self.src}->{dst}, {self.kind}, {self.size}B, {self.payload!r})"
