"""Node mobility: random waypoint (MANET) and multi-lane highway (VANET)."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .engine import RngStream


class UnknownNodeError(KeyError):
    pass


class Mobility:
    """Common surface: vectorised snapshots plus per-node exact queries."""

    n: int

    def positions(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def position_at(self, node: int, t: float) -> tuple[float, float]:
        raise NotImplementedError

    def _check(self, node: int) -> None:
        if not 0 <= node < self.n:
            raise UnknownNodeError(node)

    def neighbors_within(self, node: int, r: float, t: float) -> set[int]:
        if r <= 0:
            raise ValueError("range must be positive")
        self._check(node)
        pos = self.positions(t)
        d = np.hypot(pos[:, 0] - pos[node, 0], pos[:, 1] - pos[node, 1])
        # closed ball
        return {int(i) for i in np.flatnonzero(d <= r) if i != node}


class StaticPlacement(Mobility):
    def __init__(self, coords):
        self._pos = np.asarray(coords, dtype=float).reshape(-1, 2)
        self._pos.flags.writeable = False
        self.n = len(self._pos)

    def positions(self, t: float) -> np.ndarray:
        return self._pos

    def position_at(self, node: int, t: float) -> tuple[float, float]:
        self._check(node)
        return float(self._pos[node, 0]), float(self._pos[node, 1])


@dataclass(frozen=True)
class Leg:
    t_start: float
    x0: float
    y0: float
    x1: float
    y1: float
    t_arrive: float
    t_depart: float  # t_arrive + pause

    def at(self, t: float) -> tuple[float, float]:
        if t >= self.t_arrive:
            return self.x1, self.y1
        if self.t_arrive == self.t_start:
            return self.x0, self.y0
        f = (t - self.t_start) / (self.t_arrive - self.t_start)
        return self.x0 + f * (self.x1 - self.x0), self.y0 + f * (self.y1 - self.y0)


class RandomWaypoint(Mobility):
    """Random waypoint with a fixed per-scenario speed.

    Legs are generated lazily from each node's own stream, so the path of a
    node does not depend on when (or whether) other nodes are queried.
    """

    def __init__(self, n: int, width: float, height: float, speed: float,
                 streams: list[RngStream], pause: float = 0.0, start=None):
        if speed <= 0:
            raise ValueError("waypoint speed must be positive")
        if width <= 0 or height <= 0:
            raise ValueError("field dimensions must be positive")
        if pause < 0:
            raise ValueError("pause must be non-negative")
        self.n = n
        self.width = width
        self.height = height
        self.speed = speed
        self.pause = pause
        self._rng = streams
        self._legs: list[list[Leg]] = []
        for i in range(n):
            if start is None:
                x, y = self._draw_point(i)
            else:
                x, y = start[i]
            self._legs.append([self._make_leg(i, 0.0, x, y)])
        self._starts = [[0.0] for _ in range(n)]
        self._cur = np.array([self._row(lg[0]) for lg in self._legs], dtype=float)
        self._snap_t = None
        self._snap = None
        # scalar bounds that let positions() skip the per-node scans
        self._min_depart = float(self._cur[:, 6].min())
        self._max_start = 0.0

    @staticmethod
    def _row(leg: Leg) -> tuple:
        dur = leg.t_arrive - leg.t_start
        inv = 1.0 / dur if dur > 0 else 0.0
        return (leg.t_start, leg.x0, leg.y0, leg.x1, leg.y1, leg.t_arrive, leg.t_depart, inv)

    def _draw_point(self, i: int) -> tuple[float, float]:
        r = self._rng[i]
        return r.uniform(0.0, self.width), r.uniform(0.0, self.height)

    def _make_leg(self, i: int, t0: float, x0: float, y0: float) -> Leg:
        x1, y1 = self._draw_point(i)
        dur = math.hypot(x1 - x0, y1 - y0) / self.speed
        return Leg(t0, x0, y0, x1, y1, t0 + dur, t0 + dur + self.pause)

    def advance_waypoint(self, node: int) -> Leg:
        """Append the next leg for ``node``: new uniform destination, same speed."""
        self._check(node)
        last = self._legs[node][-1]
        leg = self._make_leg(node, last.t_depart, last.x1, last.y1)
        self._legs[node].append(leg)
        self._starts[node].append(leg.t_start)
        self._cur[node] = self._row(leg)
        if leg.t_start > self._max_start:
            self._max_start = leg.t_start
        return leg

    def current_leg(self, node: int) -> Leg:
        return self._legs[node][-1]

    def _leg_at(self, node: int, t: float) -> Leg:
        legs = self._legs[node]
        while legs[-1].t_depart <= t:
            self.advance_waypoint(node)
        k = bisect.bisect_right(self._starts[node], t) - 1
        return legs[max(k, 0)]

    def position_at(self, node: int, t: float) -> tuple[float, float]:
        self._check(node)
        if t < 0:
            raise ValueError("time must be non-negative")
        return self._leg_at(node, t).at(t)

    def positions(self, t: float) -> np.ndarray:
        if t == self._snap_t:
            return self._snap
        cur = self._cur
        if t >= self._min_depart:
            for i in np.flatnonzero(cur[:, 6] <= t).tolist():
                while self._legs[i][-1].t_depart <= t:
                    self.advance_waypoint(i)
            self._min_depart = float(cur[:, 6].min())
        if t < self._max_start:
            out = np.array([self.position_at(i, t) for i in range(self.n)])
        else:
            # column 7 holds 1/duration (0 for a zero-length leg)
            f = np.minimum((t - cur[:, 0]) * cur[:, 7], 1.0)
            out = np.empty((self.n, 2))
            out[:, 0] = cur[:, 1] + f * (cur[:, 3] - cur[:, 1])
            out[:, 1] = cur[:, 2] + f * (cur[:, 4] - cur[:, 2])
        self._snap_t, self._snap = t, out
        return out


@dataclass(frozen=True)
class HighwayConfig:
    road_length: float = 1000.0
    lanes_per_direction: int = 2
    arrival_rate: float = 0.1      # vehicles/s per lane
    speed: float = 20.0
    speed_jitter: float = 0.0      # +/- uniform m/s per vehicle
    lane_width: float = 5.0

    def __post_init__(self):
        if self.road_length <= 0:
            raise ValueError("road_length must be positive")
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be positive")
        if self.speed <= 0:
            raise ValueError("speed must be positive")
        if self.lanes_per_direction < 1:
            raise ValueError("need at least one lane per direction")
        if not 0 <= self.speed_jitter < self.speed:
            raise ValueError("speed_jitter must be in [0, speed)")

    @property
    def lanes(self) -> int:
        return 2 * self.lanes_per_direction

    def direction(self, lane: int) -> int:
        """+1 for forward lanes, -1 for reverse lanes."""
        return 1 if lane < self.lanes_per_direction else -1

    def lane_y(self, lane: int) -> float:
        return lane * self.lane_width

    def draw_speed(self, rng: RngStream) -> float:
        if self.speed_jitter == 0:
            return self.speed
        return self.speed + rng.uniform(-self.speed_jitter, self.speed_jitter)


@dataclass
class LaneArrivals:
    lane: int
    direction: int
    times: np.ndarray
    speeds: np.ndarray

    @property
    def min_speed(self) -> float:
        v = self.__dict__.get("_vmin")
        if v is None:
            v = self.__dict__["_vmin"] = float(self.speeds.min()) if len(self.speeds) else 0.0
        return v


def spawn_vehicles(highway: HighwayConfig, horizon: float,
                   streams: list[RngStream]) -> list[LaneArrivals]:
    """Poisson arrival schedule per lane over ``[0, horizon)``.

    ``streams[k]`` drives lane ``k``; inter-arrivals are exponential with
    rate ``highway.arrival_rate``.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    out = []
    lam = highway.arrival_rate
    for lane in range(highway.lanes):
        g = streams[lane].np
        # draw in blocks until the horizon is covered
        chunks, total = [], 0.0
        block = max(16, int(lam * horizon * 1.2) + 16)
        while total < horizon:
            gaps = g.exponential(1.0 / lam, block)
            c = total + np.cumsum(gaps)
            chunks.append(c)
            total = float(c[-1])
        times = np.concatenate(chunks)
        times = times[times < horizon]
        if highway.speed_jitter == 0:
            speeds = np.full(len(times), highway.speed)
        else:
            speeds = highway.speed + g.uniform(-highway.speed_jitter, highway.speed_jitter, len(times))
        out.append(LaneArrivals(lane, highway.direction(lane), times, speeds))
    return out


def occupancy_positions(arrivals: LaneArrivals, road_length: float, t: float) -> np.ndarray:
    """x-coordinates of the lane's vehicles on an open road at time ``t``.

    Vehicles enter at their lane's upstream end when they arrive and leave
    once they pass the far end.
    """
    k = np.searchsorted(arrivals.times, t, side="right")
    vmin = arrivals.min_speed
    # anyone who arrived earlier than this has already left the road
    lo = 0 if vmin <= 0 else np.searchsorted(arrivals.times, t - road_length / vmin, side="left")
    dist = (t - arrivals.times[lo:k]) * arrivals.speeds[lo:k]
    dist = dist[dist <= road_length]
    if arrivals.direction > 0:
        return dist
    return road_length - dist


class HighwayMobility(Mobility):
    """Fixed vehicle population on a bidirectional multi-lane ring road.

    Vehicles are assigned to lanes round-robin with uniform initial offsets
    (a Poisson population conditioned on its size) and drive at constant
    speed, wrapping at the road ends. Distances are plain Euclidean.
    """

    def __init__(self, n: int, config: HighwayConfig, streams: list[RngStream]):
        self.n = n
        self.config = config
        L = config.road_length
        self.lane = np.array([i % config.lanes for i in range(n)])
        self.dir = np.array([config.direction(int(k)) for k in self.lane], dtype=float)
        self.x0 = np.array([streams[i].uniform(0.0, L) for i in range(n)])
        self.speed = np.array([config.draw_speed(streams[i]) for i in range(n)])
        self.y = np.array([config.lane_y(int(k)) for k in self.lane], dtype=float)
        self._snap_t = None
        self._snap = None

    def positions(self, t: float) -> np.ndarray:
        if t == self._snap_t:
            return self._snap
        out = np.empty((self.n, 2))
        out[:, 0] = np.mod(self.x0 + self.dir * self.speed * t, self.config.road_length)
        out[:, 1] = self.y
        self._snap_t, self._snap = t, out
        return out

    def position_at(self, node: int, t: float) -> tuple[float, float]:
        self._check(node)
        x = math.fmod(self.x0[node] + self.dir[node] * self.speed[node] * t, self.config.road_length)
        if x < 0:
            x += self.config.road_length
        return float(x), float(self.y[node])

    @classmethod
    def from_states(cls, config: HighwayConfig, xs, speeds, lanes) -> HighwayMobility:
        obj = cls.__new__(cls)
        obj.n = len(xs)
        obj.config = config
        obj.lane = np.asarray(lanes)
        obj.dir = np.array([config.direction(int(k)) for k in obj.lane], dtype=float)
        obj.x0 = np.asarray(xs, dtype=float)
        obj.speed = np.asarray(speeds, dtype=float)
        obj.y = np.array([config.lane_y(int(k)) for k in obj.lane], dtype=float)
        obj._snap_t = None
        obj._snap = None
        return obj
