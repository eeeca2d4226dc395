import numpy as np
import pytest

from mprntrack.fusion import FusionParams
from mprntrack.pipeline import (
    ArceStandalone,
    MultiTargetTracker,
    SensorModel,
    make_tracker,
    resolve_fusion,
)
from mprntrack.scenario import (
    ScanData,
    ScenarioConfig,
    TargetSpec,
    noise_sigmas_at,
    reference_beam,
    reference_geometry,
    simulate,
)
from mprntrack.tracker import TrackerParams, prune


def _cfg(**kw):
    base = dict(geometry=reference_geometry(), beam=reference_beam(), targets=[TargetSpec.radial(30000, 0, 0, 5)])
    base.update(kw)
    return ScenarioConfig(**base)


def test_resolve_fusion():
    assert resolve_fusion("spa", None).mode == "off"
    assert resolve_fusion("nad", None).mode == "nad"
    assert resolve_fusion("ad", FusionParams(c_tilde=3)).mode == "ad"
    assert resolve_fusion("ad", FusionParams(mode="off")).mode == "off"
    with pytest.raises(ValueError):
        resolve_fusion("mht", None)


def test_sensor_model_matches_simulator():
    cfg = _cfg(snr_ref_db=-10.0)
    m = SensorModel(cfg, 0.01)
    x = np.array([[25000.0, 1000, -2000], [30000, 0, 0]])
    for k in range(2):
        np.testing.assert_allclose(m.sigmas(x)[k], noise_sigmas_at(x[k], cfg), rtol=1e-12)
    assert m.sigmas(np.zeros((1, 3)))[0, 0] > 0


def test_clutter_intensity_floor():
    cfg = _cfg(clutter_mean=0.0)
    m = SensorModel(cfg, 0.01)
    lo, hi = 0.0, cfg.clutter_range_max
    np.testing.assert_allclose(m.clutter_intensity(0, np.array([1000.0])), 0.01 / (hi - lo))
    assert np.all(m.clutter_intensity(0, np.array([1e6])) > 0)
    busy = SensorModel(_cfg(clutter_mean=2.0), 0.01)
    np.testing.assert_allclose(busy.clutter_intensity(0, np.array([1000.0])), 2.0 / (hi - lo))


def test_track_count_bookkeeping():
    cfg = _cfg(clutter_mean=1.0, pd=0.9, n_scans=15)
    _, scans = simulate(cfg, np.random.default_rng(0))
    trk = MultiTargetTracker(cfg, rng=np.random.default_rng(1), variant="nad")
    for scan in scans:
        before = len(prune(trk.beliefs, trk.params.prune_threshold))
        rep = trk.step(scan)
        assert rep.n_beliefs == before + len(scan.ranges[0])
        assert all(e.existence >= trk.params.confirm_threshold for e in rep.estimates)


def test_labels_are_unique_and_stable():
    cfg = _cfg(n_scans=10)
    _, scans = simulate(cfg, np.random.default_rng(0))
    trk = MultiTargetTracker(cfg, rng=np.random.default_rng(1))
    seen = set()
    for scan in scans:
        trk.step(scan)
        labels = [b.label for b in trk.beliefs]
        assert len(labels) == len(set(labels))
        seen.update(labels)
    assert seen == set(range(len(seen)))


def test_empty_scans_are_harmless():
    cfg = _cfg()
    trk = MultiTargetTracker(cfg, rng=np.random.default_rng(0))
    rep = trk.step(ScanData(1, [np.zeros(0)] * 5))
    assert rep.estimates == [] and rep.n_beliefs == 0


def test_ideal_tracking_confirms_target():
    cfg = _cfg(n_scans=20, snr_ref_db=10.0)
    truth, scans = simulate(cfg, np.random.default_rng(0))
    trk = MultiTargetTracker(cfg, rng=np.random.default_rng(1))
    reps = trk.run(scans)
    last = reps[-1]
    assert len(last.estimates) == 1
    assert np.linalg.norm(last.estimates[0].position - truth[0, 20, :3]) < 500


def test_fusion_diagnostics_reported():
    cfg = _cfg(n_scans=3)
    _, scans = simulate(cfg, np.random.default_rng(0))
    trk = make_tracker(cfg, "ad", fusion=FusionParams(c_tilde=3.0), rng=np.random.default_rng(0))
    reps = trk.run(scans)
    assert reps[0].fusion and reps[0].fusion[0].mode == "ad"
    spa = make_tracker(cfg, "spa", rng=np.random.default_rng(0))
    assert spa.run(scans)[0].fusion == []


def test_tracker_rejects_arce_variant():
    with pytest.raises(ValueError):
        MultiTargetTracker(_cfg(), variant="arce")


def test_arce_standalone_localizes_each_monostatic_return():
    cfg = _cfg(snr_ref_db=40.0, n_scans=2)
    truth, scans = simulate(cfg, np.random.default_rng(0))
    trk = make_tracker(cfg, "arce")
    assert isinstance(trk, ArceStandalone)
    rep = trk.step(scans[0])
    assert len(rep.estimates) == 1
    assert np.linalg.norm(rep.estimates[0].position - truth[0, 1, :3]) < 50.0


def test_arce_standalone_grouping_gate():
    cfg = _cfg(snr_ref_db=40.0, clutter_mean=0.0, n_scans=1)
    _, (scan,) = simulate(cfg, np.random.default_rng(0))
    far = [r if i == 0 else np.r_[r, r + 20000.0] for i, r in enumerate(scan.ranges)]
    rec, rho = ArceStandalone(cfg).group(ScanData(1, far), float(scan.ranges[0][0]))
    assert rec.tolist() == [1, 2, 3, 4, 5]
    np.testing.assert_allclose(rho[1:], [scan.ranges[i][0] for i in range(1, 5)])


def test_ess_resampling_mode():
    cfg = _cfg(n_scans=5)
    _, scans = simulate(cfg, np.random.default_rng(0))
    trk = MultiTargetTracker(cfg, TrackerParams(resample="ess", regularization=0.2), rng=np.random.default_rng(0))
    trk.run(scans)
    assert trk.beliefs
