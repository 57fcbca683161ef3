"""Closed-form highway connectivity tools: Poisson segment occupancy, its
generating function, nonempty-range probability, stationary occupancy and
link-duration kinematics, plus empirical checks against mobility traces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .engine import RngStream, node_substream
from .mobility import HighwayConfig, occupancy_positions, spawn_vehicles

SAME = "same"
OPPOSITE = "opposite"

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"


def _check_phi(phi: float) -> None:
    if not phi >= 0 or math.isinf(phi):
        raise ValueError(f"mean occupancy must be finite and non-negative, got {phi!r}")


def poisson_pmf(phi: float, n: int) -> float:
    """P(N = n) for N ~ Poisson(phi)."""
    _check_phi(phi)
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise ValueError(f"count must be a non-negative integer, got {n!r}")
    n = int(n)
    if phi == 0:
        return 1.0 if n == 0 else 0.0
    if n > 20:
        # n! overflows long before the probability underflows
        return math.exp(n * math.log(phi) - phi - math.lgamma(n + 1))
    return math.exp(-phi) * phi ** n / math.factorial(n)


def pgf(phi: float, z: float) -> float:
    """E[z^N] = exp(-phi (1 - z))."""
    _check_phi(phi)
    if not 0 <= z <= 1:
        raise ValueError("z must lie in [0, 1]")
    return math.exp(-phi * (1.0 - z))


def p_nonempty(phi: float) -> float:
    """Probability that at least one node occupies the segment."""
    return 1.0 - pgf(phi, 0.0)


def steady_state_phi(lam: float, speed: float, seg_length: float) -> float:
    """Stationary mean count of a constant-speed Poisson stream on a segment."""
    if lam <= 0 or speed <= 0 or seg_length <= 0:
        raise ValueError("arrival rate, speed and segment length must be positive")
    return lam * seg_length / speed


@dataclass
class SegmentModel:
    segments: list[tuple[float, float]]
    phi: list[float]
    lam: float | None = None
    speed: float | None = None

    def __post_init__(self):
        if len(self.segments) != len(self.phi):
            raise ValueError("one mean occupancy per segment")
        for (_, length), p in zip(self.segments, self.phi):
            if length <= 0:
                raise ValueError("segment length must be positive")
            _check_phi(p)

    @classmethod
    def stationary(cls, segments, lam: float, speed: float) -> SegmentModel:
        segs = [(float(a), float(b)) for a, b in segments]
        return cls(segs, [steady_state_phi(lam, speed, b) for _, b in segs], lam, speed)

    def pmf(self, i: int, n: int) -> float:
        return poisson_pmf(self.phi[i], n)

    def p_nonempty(self, i: int) -> float:
        return p_nonempty(self.phi[i])


@dataclass(frozen=True)
class KinematicPair:
    v1: float
    v2: float
    direction: str = SAME
    range: float = 250.0

    def __post_init__(self):
        if self.v1 <= 0 or self.v2 <= 0:
            raise ValueError("speeds must be positive")
        if self.range <= 0:
            raise ValueError("range must be positive")
        if self.direction not in (SAME, OPPOSITE):
            raise ValueError(f"direction must be {SAME!r} or {OPPOSITE!r}")

    @property
    def relative_speed(self) -> float:
        if self.direction == SAME:
            return abs(self.v1 - self.v2)
        return self.v1 + self.v2


def link_duration(pair: KinematicPair) -> float:
    """Time two vehicles stay within range on a line, from the moment they meet.

    The contact window is 2R of relative travel; equal speeds in the same
    direction never separate (``math.inf``).
    """
    rel = pair.relative_speed
    if rel == 0:
        return math.inf
    return 2.0 * pair.range / rel


def stepped_link_duration(pair: KinematicPair, dt: float = 1e-3, horizon: float = 1e4) -> float:
    """Measure the contact time by stepping two highway vehicles forward.

    The second vehicle starts exactly ``range`` behind (same direction,
    faster one behind) or ``range`` ahead and approaching (opposite).
    Returns ``math.inf`` if still in contact at ``horizon``.
    """
    R = pair.range
    if pair.direction == SAME:
        fast, slow = max(pair.v1, pair.v2), min(pair.v1, pair.v2)
        x = np.array([0.0, R])
        v = np.array([fast, slow])
    else:
        x = np.array([0.0, R])
        v = np.array([pair.v1, -pair.v2])
    steps_per_chunk = 100_000
    t0 = 0
    while t0 * dt < horizon:
        k = np.arange(t0, t0 + steps_per_chunk, dtype=float)
        gap = np.abs((x[1] - x[0]) + (v[1] - v[0]) * k * dt)
        # first step at which the pair is out of range again (step 0 is on the boundary)
        out = np.flatnonzero(gap[1:] > R + 1e-9) if t0 == 0 else np.flatnonzero(gap > R + 1e-9)
        if len(out):
            idx = out[0] + (1 if t0 == 0 else 0)
            return (t0 + idx) * dt
        t0 += steps_per_chunk
    return math.inf


# -- empirical occupancy -------------------------------------------------------

def sample_occupancy(highway: HighwayConfig, seg_start: float, seg_length: float,
                     n_times: int, seed: int, spacing: float | None = None) -> np.ndarray:
    """Vehicle counts inside ``[seg_start, seg_start + seg_length]``.

    One sample per lane per observation time; observations start once the
    road has filled and are ``spacing`` apart (default: segment transit
    time, so consecutive samples do not share vehicles).
    """
    if seg_start < 0 or seg_start + seg_length > highway.road_length:
        raise ValueError("segment must lie on the road")
    vmin = highway.speed - highway.speed_jitter
    if spacing is None:
        spacing = seg_length / vmin
    t0 = highway.road_length / vmin
    horizon = t0 + spacing * n_times + 1.0
    lanes = spawn_vehicles(highway, horizon,
                           [RngStream(seed, node_substream("lane", k)) for k in range(highway.lanes)])
    times = t0 + spacing * np.arange(n_times)
    out = np.empty((len(lanes), n_times), dtype=np.int64)
    hi = seg_start + seg_length
    for j, arr in enumerate(lanes):
        for i, t in enumerate(times):
            x = occupancy_positions(arr, highway.road_length, float(t))
            out[j, i] = np.count_nonzero((x >= seg_start) & (x <= hi))
    return out.ravel()


def segment_counts(trace, seg_start: float, seg_length: float) -> np.ndarray:
    """Reduce a sequence of position snapshots (x coordinates) to segment counts."""
    hi = seg_start + seg_length
    return np.array([np.count_nonzero((np.asarray(x) >= seg_start) & (np.asarray(x) <= hi))
                     for x in trace], dtype=np.int64)


def convoy_counts(spacing: float, seg_length: float, n: int, seed: int = 0) -> np.ndarray:
    """Counts for an equally spaced convoy seen through a segment at random offsets."""
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(0.0, spacing, n)
    # vehicles at offset + k*spacing; count those in [0, seg_length]
    return (np.floor((seg_length - offsets) / spacing) + 1).astype(np.int64)


@dataclass
class OccupancyReport:
    status: str
    samples: int
    phi: float
    mean: float | None = None
    variance: float | None = None
    dispersion: float | None = None
    frequencies: dict = field(default_factory=dict)
    chi2: float | None = None
    dof: int | None = None
    p_value: float | None = None

    @property
    def mean_error(self) -> float | None:
        if self.mean is None or self.phi == 0:
            return None
        return abs(self.mean - self.phi) / self.phi


def validate_occupancy(counts, phi: float | SegmentModel, segment: int = 0,
                       min_samples: int = 100_000, mean_tol: float = 0.02,
                       dispersion_band: tuple[float, float] = (0.9, 1.1)) -> OccupancyReport:
    """Compare observed segment counts with Poisson(phi).

    Passes iff the mean is within ``mean_tol`` of phi and variance/mean lies
    in ``dispersion_band``; fewer than ``min_samples`` counts is
    inconclusive rather than a failure.
    """
    if isinstance(phi, SegmentModel):
        phi = phi.phi[segment]
    _check_phi(phi)
    c = np.asarray(counts, dtype=np.int64).ravel()
    n = len(c)
    if n == 0 or n < min_samples:
        return OccupancyReport(INCONCLUSIVE, n, phi)
    mean = float(c.mean())
    var = float(c.var(ddof=1)) if n > 1 else 0.0
    disp = var / mean if mean > 0 else math.nan
    values, freq = np.unique(c, return_counts=True)
    freqs = {int(v): int(f) for v, f in zip(values, freq)}
    chi2, dof, pval = _chi_square(freqs, n, phi)
    ok = (phi > 0 and abs(mean - phi) <= mean_tol * phi
          and dispersion_band[0] <= disp <= dispersion_band[1])
    return OccupancyReport(PASS if ok else FAIL, n, phi, mean, var, disp, freqs, chi2, dof, pval)


def _chi_square(freqs: dict, n: int, phi: float):
    """Pearson statistic over bins 0..K-1 plus a merged upper tail (expected >= 5 each)."""
    if phi == 0:
        return None, None, None
    expected, observed = [], []
    k = 0
    cum = 0.0
    while True:
        p = poisson_pmf(phi, k)
        tail = 1.0 - cum - p
        if n * p < 5 and k > phi:
            break
        if n * tail < 5:
            break
        expected.append(n * p)
        observed.append(freqs.get(k, 0))
        cum += p
        k += 1
    expected.append(n * (1.0 - cum))
    observed.append(sum(f for v, f in freqs.items() if v >= k))
    if len(expected) < 2:
        return None, None, None
    e = np.array(expected)
    o = np.array(observed, dtype=float)
    chi2 = float(((o - e) ** 2 / e).sum())
    dof = len(e) - 1
    return chi2, dof, float(stats.chi2.sf(chi2, dof))


# -- curves for plotting -------------------------------------------------------

def connectivity_curve(densities, range_m: float = 250.0) -> list[dict]:
    """p_nonempty against vehicle density (vehicles/m), with phi = density * 2R."""
    rows = []
    for rho in densities:
        phi = rho * 2.0 * range_m
        rows.append({"density_per_m": float(rho), "phi": phi,
                     "p_empty": pgf(phi, 0.0), "p_nonempty": p_nonempty(phi)})
    return rows


def duration_curve(speeds, range_m: float = 250.0) -> list[dict]:
    """Link duration for every ordered speed pair in both directions."""
    rows = []
    for direction in (SAME, OPPOSITE):
        for v1 in speeds:
            for v2 in speeds:
                d = link_duration(KinematicPair(v1, v2, direction, range_m))
                rows.append({"direction": direction, "v1_mps": float(v1), "v2_mps": float(v2),
                             "duration_s": d})
    return rows
