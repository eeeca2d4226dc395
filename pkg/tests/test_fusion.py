import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mprntrack.assoc import CLUTTER
from mprntrack.fusion import (
    FusionParams,
    arce_resample,
    arce_resample_detail,
    fusion_step,
    select_replacement_count,
    virtual_beam,
)
from mprntrack.geom import BeamConstraint, bistatic_range, sph_to_cart
from mprntrack.tracker import Belief


def _belief_at(points, weights=None, label=0, vel=None):
    points = np.asarray(points, float)
    n = len(points)
    v = np.zeros((n, 3)) if vel is None else vel
    w = np.full(n, 0.5 / n) if weights is None else np.asarray(weights, float)
    return Belief(np.column_stack([points, v]), w, label)


def _cloud(rng, n=500, center=(25000, 0.05, -0.02), spread=(200, 0.01, 0.015)):
    r = rng.normal(center[0], spread[0], n)
    az = rng.normal(center[1], spread[1], n)
    el = rng.normal(center[2], spread[2], n)
    return sph_to_cart(r, az, el)


def test_virtual_beam_boresight_collapses(beam):
    b = _belief_at(np.tile([20000.0, 0, 0], (10, 1)))
    vb = virtual_beam(b, beam, 1.0)
    assert (vb.azimuth_center, vb.elevation_center) == pytest.approx((0, 0), abs=1e-15)
    assert vb.azimuth_halfwidth == pytest.approx(0, abs=1e-12)
    assert vb.elevation_halfwidth == pytest.approx(0, abs=1e-12)


def test_virtual_beam_wide_spread_returns_physical(beam):
    rng = np.random.default_rng(0)
    b = _belief_at(_cloud(rng, spread=(100, 0.3, 0.3), center=(25000, 0, 0)))
    vb = virtual_beam(b, beam, 3.0)
    assert vb == beam


def test_virtual_beam_scales_with_c_tilde():
    rng = np.random.default_rng(1)
    b = _belief_at(_cloud(rng))
    huge = BeamConstraint(0, 1.5, 0, 1.5)
    v1, v3 = virtual_beam(b, huge, 1.0), virtual_beam(b, huge, 3.0)
    assert v3.azimuth_halfwidth == pytest.approx(3 * v1.azimuth_halfwidth, rel=1e-12)
    assert v3.elevation_halfwidth == pytest.approx(3 * v1.elevation_halfwidth, rel=1e-12)
    assert v1.azimuth_center == pytest.approx(v3.azimuth_center)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 5.0), st.integers(0, 2**32 - 1))
def test_virtual_beam_within_physical(c_tilde, seed):
    rng = np.random.default_rng(seed)
    phys = BeamConstraint.from_degrees(0, 20, 0, 20)
    center = (25000, rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))
    b = _belief_at(_cloud(rng, 100, center, (100, 0.05, 0.05)))
    vb = virtual_beam(b, phys, c_tilde)
    assert vb.azimuth_halfwidth <= phys.azimuth_halfwidth + 1e-15
    assert vb.elevation_halfwidth <= phys.elevation_halfwidth + 1e-15
    assert abs(vb.azimuth_center - phys.azimuth_center) <= phys.azimuth_halfwidth + 1e-12


def test_replacement_count_examples():
    assert select_replacement_count(np.full(10, 0.1), 0.7) == 3
    assert select_replacement_count(np.array([0.01, 0.09, 0.9]), 0.7) == 2
    assert select_replacement_count(np.array([0.2, 0.3, 0.5]), 0.999999) == 0
    assert select_replacement_count(np.full(500, 1 / 500), 0.7) == 150
    assert select_replacement_count(np.zeros(4), 0.7) == 0


def test_conservation_and_exact_replaced_fraction():
    rng = np.random.default_rng(0)
    n = 500
    b = _belief_at(_cloud(rng), np.full(n, 0.8 / n))
    res = arce_resample_detail(b, np.array([25000.0, 0, 0]), FusionParams(), rng)
    assert len(res.replaced) == 150
    w = res.belief.weights
    assert w.sum() == pytest.approx(0.8, rel=1e-12)
    assert w[res.replaced].sum() / w.sum() == pytest.approx(0.3, rel=1e-12)
    assert res.prefix_fraction == pytest.approx(0.3, rel=1e-12)


def test_kept_ratios_and_velocities_preserved():
    rng = np.random.default_rng(2)
    n = 200
    vel = rng.normal(0, 5, (n, 3))
    w = rng.exponential(1, n)
    b = _belief_at(_cloud(rng, n), 0.6 * w / w.sum(), vel=vel)
    res = arce_resample_detail(b, np.array([25000.0, 0, 0]), FusionParams(), rng)
    kept = np.setdiff1d(np.arange(n), res.replaced)
    ratio = res.belief.weights[kept] / b.weights[kept]
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)
    np.testing.assert_array_equal(res.belief.particles[:, 3:], vel)
    np.testing.assert_array_equal(res.belief.particles[kept, :3], b.particles[kept, :3])


def test_replaced_draws_stay_near_estimate():
    rng = np.random.default_rng(3)
    n = 500
    b = _belief_at(_cloud(rng, n), np.full(n, 1.0 / n))
    p = FusionParams(sigma_arce=500.0)
    target = np.array([24000.0, 300.0, -200.0])
    res = arce_resample_detail(b, target, p, rng)
    d = np.abs(res.belief.particles[res.replaced, :3] - target)
    assert np.all(d <= 6 * p.sigma_arce)


def test_tie_breaking_spreads_over_resampled_copies():
    # after resampling many particles are copies; ties must not pick copies of one parent
    rng = np.random.default_rng(4)
    parents = _cloud(rng, 10)
    pts = np.repeat(parents, 50, axis=0)
    b = _belief_at(pts, np.full(500, 1 / 500))
    res = arce_resample_detail(b, np.zeros(3), FusionParams(), rng)
    parent_of = res.replaced // 50
    assert len(np.unique(parent_of)) == 10


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 300), st.floats(0.01, 0.99), st.integers(0, 2**32 - 1))
def test_weight_conservation_property(n, alpha, seed):
    rng = np.random.default_rng(seed)
    w = rng.exponential(1, n) * rng.uniform(0.01, 1)
    b = _belief_at(rng.normal(0, 1000, (n, 3)) + [20000, 0, 0], w)
    res = arce_resample_detail(b, np.array([20000.0, 0, 0]), FusionParams(alpha_r=alpha), rng)
    assert res.belief.weights.sum() == pytest.approx(w.sum(), rel=1e-12)
    if len(res.replaced):
        frac = res.belief.weights[res.replaced].sum() / w.sum()
        assert frac == pytest.approx(1 - alpha, rel=1e-9)
        order = np.sort(w)
        assert len(res.replaced) == select_replacement_count(order, alpha)


def _single_target_setup(geometry, rng, n=500):
    x = sph_to_cart(25000, 0.05, -0.03)
    pts = x + rng.normal(0, 800, (n, 3))
    b = _belief_at(pts, np.full(n, 0.9 / n))
    ranges = [np.array([bistatic_range(x, geometry.tx_position, geometry.rx_positions[i])]) for i in range(5)]
    return x, b, ranges


def test_fusion_off_is_identity(geometry, beam):
    rng = np.random.default_rng(0)
    _, b, ranges = _single_target_setup(geometry, rng)
    hard = [np.array([0])] * 5
    out, diags = fusion_step([b], ranges, hard, geometry, beam, FusionParams(mode="off"), np.full((1, 5), 10.0), rng)
    assert out[0] is b and diags == []


def test_nad_pulls_mean_to_target(geometry, beam):
    rng = np.random.default_rng(1)
    x, b, ranges = _single_target_setup(geometry, rng)
    hard = [np.array([0])] * 5
    out, diags = fusion_step([b], ranges, hard, geometry, beam, FusionParams(mode="nad"), np.full((1, 5), 10.0), rng)
    nb = out[0]
    assert nb.existence() == pytest.approx(b.existence(), rel=1e-12)
    assert np.linalg.norm(nb.mean_state()[:3] - x) < FusionParams().sigma_arce
    d = diags[0]
    assert d.n_measurements == 5 and d.n_replaced == 150 and not d.skipped
    assert np.linalg.norm(d.arce_position - x) < 1e-3


def test_ad_mode_runs_and_conserves(geometry, beam):
    rng = np.random.default_rng(2)
    x, b, ranges = _single_target_setup(geometry, rng)
    hard = [np.array([0])] * 5
    out, diags = fusion_step(
        [b], ranges, hard, geometry, beam, FusionParams(mode="ad", c_tilde=3.0), np.full((1, 5), 10.0), rng
    )
    assert out[0].existence() == pytest.approx(b.existence(), rel=1e-12)
    assert diags[0].mode == "ad" and not diags[0].skipped


def test_clutter_only_belief_passes_through(geometry, beam):
    rng = np.random.default_rng(3)
    _, b, ranges = _single_target_setup(geometry, rng)
    hard = [np.array([CLUTTER])] * 5
    out, diags = fusion_step([b], ranges, hard, geometry, beam, FusionParams(mode="nad"), np.full((1, 5), 10.0), rng)
    assert out[0] is b
    assert diags[0].skipped and diags[0].n_measurements == 0


def test_no_monostatic_measurement_uses_range_cap(geometry, beam):
    rng = np.random.default_rng(4)
    x, b, ranges = _single_target_setup(geometry, rng)
    hard = [np.array([CLUTTER])] + [np.array([0])] * 4
    out, diags = fusion_step(
        [b], ranges, hard, geometry, beam, FusionParams(mode="nad"), np.full((1, 5), 10.0), rng, range_cap=70000.0
    )
    assert diags[0].n_measurements == 4
    assert np.linalg.norm(diags[0].arce_position - x) < 1.0


def test_beam_rejection_zeroes_outside_particles(geometry):
    rng = np.random.default_rng(5)
    narrow = BeamConstraint.from_degrees(0, 3, 0, 3)
    x = sph_to_cart(25000, 0.0, 0.0)
    pts = x + rng.normal(0, 3000, (500, 3))
    b = _belief_at(pts, np.full(500, 0.9 / 500))
    ranges = [np.array([bistatic_range(x, geometry.tx_position, geometry.rx_positions[i])]) for i in range(5)]
    hard = [np.array([0])] * 5
    p = FusionParams(mode="nad", beam_rejection=True)
    out, _ = fusion_step([b], ranges, hard, geometry, narrow, p, np.full((1, 5), 10.0), rng)
    from mprntrack.geom import in_beam_many

    inside = in_beam_many(out[0].positions, narrow)
    assert np.all(out[0].weights[~inside] == 0)
    assert out[0].existence() == pytest.approx(0.9, rel=1e-12)


def test_params_validation():
    for kw in [dict(mode="joint"), dict(alpha_r=1.0), dict(sigma_arce=0.0), dict(c_tilde=-1.0)]:
        with pytest.raises(ValueError):
            FusionParams(**kw)


def test_arce_resample_wrapper():
    rng = np.random.default_rng(6)
    b = _belief_at(_cloud(rng, 100), np.full(100, 0.01))
    out = arce_resample(b, np.array([25000.0, 0, 0]), FusionParams(), np.random.default_rng(0))
    assert out.existence() == pytest.approx(1.0, rel=1e-12)
    assert not math.isnan(out.weights.sum())
