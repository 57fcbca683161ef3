"""Discrete-event engine: virtual clock, event queue and seeded random streams."""

from __future__ import annotations

import hashlib
import heapq
import random
import struct
from typing import Any, Callable

import numpy as np

# per-node substream id = purpose * NODE_SPAN + node; subsystems live above
NODE_SPAN = 1 << 20
NODE_PURPOSES = {"mobility": 0, "mac": 1, "routing": 2, "lane": 3}
SUBSYSTEM_BASE = 1 << 30
SUBSYSTEMS = {
    "channel": SUBSYSTEM_BASE + 1,
    "traffic": SUBSYSTEM_BASE + 2,
    "topology": SUBSYSTEM_BASE + 3,
}


def node_substream(purpose: str, node: int) -> int:
    if not 0 <= node < NODE_SPAN:
        raise ValueError(f"node id {node} out of range")
    return NODE_PURPOSES[purpose] * NODE_SPAN + node


class SchedulingError(ValueError):
    pass


class Event:
    __slots__ = ("time", "seq", "kind", "target", "fn", "args", "cancelled", "fired")

    def __init__(self, time, seq, kind, target, fn, args):
        self.time = time
        self.seq = seq
        self.kind = kind
        self.target = target
        self.fn = fn
        self.args = args
        self.cancelled = False
        self.fired = False

    def __repr__(self) -> str:
        return f"Event(t={self.time!r}, seq={self.seq}, kind={self.kind!r}, target={self.target!r})"


class RngStream:
    """Reproducible random stream keyed by ``(master_seed, substream_id)``.

    Seeds are split with numpy's ``SeedSequence`` so that distinct substreams
    are independent; draws come from a ``random.Random`` (fast scalars) and a
    numpy ``Generator`` (vector draws) seeded from the same sequence.
    """

    def __init__(self, master_seed: int, substream_id: int):
        if master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        self.master_seed = master_seed
        self.substream_id = substream_id
        ss = np.random.SeedSequence(master_seed, spawn_key=(substream_id,))
        state = ss.generate_state(4, dtype=np.uint64)
        self.py = random.Random(int.from_bytes(state[:2].tobytes(), "little"))
        self.np = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
            [int(x) for x in state[2:]])))

    def random(self) -> float:
        return self.py.random()

    def uniform(self, a: float, b: float) -> float:
        return a + (b - a) * self.py.random()

    def randint(self, a: int, b: int) -> int:
        return self.py.randint(a, b)

    def expovariate(self, rate: float) -> float:
        return self.py.expovariate(rate)


class Engine:
    """Single-threaded event loop ordered by ``(fire_time, seq)``.

    ``trace=True`` folds every dispatched ``(time, seq, kind)`` tuple into a
    running digest, exposed as :attr:`trace_hash`.
    """

    def __init__(self, master_seed: int = 0, trace: bool = False):
        self.now = 0.0
        self.master_seed = master_seed
        self._queue: list[tuple[float, int, Event]] = []
        self._seq = 0
        self.dispatched = 0
        self._streams: dict[int, RngStream] = {}
        self._digest = hashlib.blake2b(digest_size=16) if trace else None

    def schedule(self, fire_time: float, kind: str, target: Any,
                 fn: Callable[..., Any] | None = None, *args) -> Event:
        if fire_time < self.now:
            raise SchedulingError(
                f"cannot schedule at t={fire_time!r} before now={self.now!r}")
        ev = Event(fire_time, self._seq, kind, target, fn, args)
        self._seq += 1
        heapq.heappush(self._queue, (fire_time, ev.seq, ev))
        return ev

    def after(self, delay: float, kind: str, target: Any, fn: Callable[..., Any] | None, *args) -> Event:
        return self.schedule(self.now + delay, kind, target, fn, *args)

    @staticmethod
    def cancel(event: Event) -> None:
        # idempotent; dispatched events are unaffected
        event.cancelled = True

    def run_until(self, t_end: float) -> int:
        queue = self._queue
        digest = self._digest
        count = 0
        pop = heapq.heappop
        while queue and queue[0][0] <= t_end:
            ev = pop(queue)[2]
            if ev.cancelled:
                continue
            self.now = ev.time
            ev.fired = True
            count += 1
            if digest is not None:
                digest.update(struct.pack("<dq", ev.time, ev.seq))
                digest.update(ev.kind.encode())
            if ev.fn is not None:
                ev.fn(*ev.args)
        if t_end > self.now:
            self.now = t_end
        self.dispatched += count
        return count

    @property
    def pending(self) -> int:
        return sum(1 for _, _, ev in self._queue if not ev.cancelled)

    @property
    def trace_hash(self) -> str | None:
        return None if self._digest is None else self._digest.hexdigest()

    def node_stream(self, purpose: str, node: int) -> RngStream:
        return self.stream(node_substream(purpose, node))

    def stream(self, substream_id: int | str) -> RngStream:
        if isinstance(substream_id, str):
            substream_id = SUBSYSTEMS[substream_id]
        rng = self._streams.get(substream_id)
        if rng is None:
            rng = self._streams[substream_id] = RngStream(self.master_seed, substream_id)
        return rng
