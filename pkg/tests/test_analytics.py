import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from adhocsim import analytics as an
from adhocsim.mobility import HighwayConfig


@given(st.floats(0.0, 50.0), st.integers(0, 200))
def test_pmf_matches_scipy(phi, n):
    assert an.poisson_pmf(phi, n) == pytest.approx(stats.poisson.pmf(n, phi), rel=1e-9, abs=1e-300)


@given(st.floats(0.01, 30.0))
def test_pmf_sums_to_one(phi):
    total = sum(an.poisson_pmf(phi, n) for n in range(200))
    assert total == pytest.approx(1.0, abs=1e-9)


@given(st.floats(0.0, 20.0), st.floats(0.0, 1.0))
def test_pgf_is_series(phi, z):
    series = sum(an.poisson_pmf(phi, n) * z ** n for n in range(150))
    assert an.pgf(phi, z) == pytest.approx(series, rel=1e-9, abs=1e-12)


def test_nonempty_probability():
    assert an.p_nonempty(0.0) == 0.0
    assert an.p_nonempty(2.0) == pytest.approx(1 - math.exp(-2.0))


def test_bad_inputs_rejected():
    for bad in (-1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            an.poisson_pmf(bad, 0)
    with pytest.raises(ValueError):
        an.poisson_pmf(1.0, 1.5)
    with pytest.raises(ValueError):
        an.pgf(1.0, 1.2)
    with pytest.raises(ValueError):
        an.steady_state_phi(0.0, 20.0, 100.0)
    with pytest.raises(ValueError):
        an.KinematicPair(0.0, 10.0)
    with pytest.raises(ValueError):
        an.KinematicPair(1.0, 10.0, direction="sideways")


def test_segment_model_stationary():
    model = an.SegmentModel.stationary([(0, 400), (400, 200)], lam=0.1, speed=20.0)
    assert model.phi == [2.0, 1.0]
    assert model.pmf(1, 0) == pytest.approx(math.exp(-1.0))
    with pytest.raises(ValueError):
        an.SegmentModel([(0.0, 100.0)], [1.0, 2.0])


@settings(max_examples=30, deadline=None)
@given(st.floats(5.0, 40.0), st.floats(5.0, 40.0), st.sampled_from([an.SAME, an.OPPOSITE]))
def test_closed_form_duration_matches_stepping(v1, v2, direction):
    pair = an.KinematicPair(v1, v2, direction, 250.0)
    d = an.link_duration(pair)
    if math.isinf(d) or d > 1e4:
        return
    assert an.stepped_link_duration(pair, dt=1e-3) == pytest.approx(d, abs=2e-3)


def test_equal_speeds_never_separate():
    assert math.isinf(an.link_duration(an.KinematicPair(20.0, 20.0)))


def test_occupancy_inconclusive_when_short():
    rep = an.validate_occupancy(np.ones(10, dtype=int), 1.0)
    assert rep.status == an.INCONCLUSIVE and rep.samples == 10


def test_occupancy_report_on_exact_poisson_draws():
    counts = np.random.default_rng(0).poisson(2.0, 120_000)
    rep = an.validate_occupancy(counts, 2.0)
    assert rep.status == an.PASS
    assert rep.p_value > 1e-3
    assert sum(rep.frequencies.values()) == len(counts)


def test_convoy_is_underdispersed():
    rep = an.validate_occupancy(an.convoy_counts(200.0, 400.0, 120_000), 2.0)
    assert rep.status == an.FAIL and rep.dispersion < 0.5


def test_simulated_occupancy_close_to_model():
    hw = HighwayConfig(arrival_rate=0.1, speed=20.0)
    counts = an.sample_occupancy(hw, 300.0, 400.0, 2000, seed=3)
    assert counts.mean() == pytest.approx(2.0, rel=0.08)


def test_segment_counts():
    trace = [[0.0, 10.0, 50.0], [5.0, 200.0]]
    assert an.segment_counts(trace, 0.0, 10.0).tolist() == [2, 1]


def test_curves_shapes():
    conn = an.connectivity_curve([0.0, 0.01], 250.0)
    assert conn[0]["p_nonempty"] == 0.0 and conn[1]["phi"] == pytest.approx(5.0)
    dur = an.duration_curve([2.0, 30.0], 250.0)
    assert len(dur) == 8
    assert {r["direction"] for r in dur} == {an.SAME, an.OPPOSITE}
