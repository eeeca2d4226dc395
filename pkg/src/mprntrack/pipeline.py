"""Per-scan tracking loops: baseline SPA, ARCE-enhanced (NAD/AD) and stand-alone ARCE."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .arce import ArceInput, InfeasibleConstraints, arce_localize, range_interval_from_monostatic
from .assoc import hard_associations
from .fusion import FusionDiagnostic, FusionParams, fusion_step
from .scenario import ScanData, ScenarioConfig, clutter_density, clutter_support, range_noise_sigma, snr_many
from .tracker import (
    Belief,
    TrackerParams,
    associate,
    effective_sample_size,
    estimate,
    initialize_births,
    predict,
    prune,
    regularize,
    resample,
    update,
)

VARIANTS = ("spa", "nad", "ad", "arce")
_SIGMA_FLOOR = 1e-3  # m; guards the noise model at the transmitter itself


def resolve_fusion(variant: str, fusion: FusionParams | None) -> FusionParams:
    """Fusion settings actually applied by ``variant``."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    fusion = fusion or FusionParams()
    if variant in ("spa", "arce") or fusion.mode == "off":
        return replace(fusion, mode="off")
    return replace(fusion, mode=variant)


@dataclass
class Estimate:
    label: int
    state: np.ndarray
    existence: float

    @property
    def position(self) -> np.ndarray:
        return self.state[:3]


@dataclass
class ScanReport:
    scan_index: int
    estimates: list[Estimate]
    n_beliefs: int
    fusion: list[FusionDiagnostic] = field(default_factory=list)


class SensorModel:
    """Noise and clutter model the tracker assumes; mirrors the simulator's."""

    def __init__(self, cfg: ScenarioConfig, min_clutter_rate: float):
        self.cfg = cfg
        # a strictly clutter-free model makes every measurement certain; keep a small floor
        self.clutter_rate = max(cfg.clutter_mean, min_clutter_rate)

    def sigmas(self, points: np.ndarray) -> np.ndarray:
        """``(L, S)`` range noise std for targets at ``points``."""
        points = np.asarray(points, float).reshape(-1, 3)
        cfg = self.cfg
        out = np.empty((len(points), cfg.n_receivers))
        for i in range(cfg.n_receivers):
            with np.errstate(divide="ignore"):
                snr = snr_many(points, i + 1, cfg)
            snr = np.where(np.isfinite(snr), snr, 1e300)
            out[:, i] = np.maximum(range_noise_sigma(np.maximum(snr, 1e-300), cfg.bandwidth), _SIGMA_FLOOR)
        return out

    def monostatic_sigma(self, rho: float) -> float:
        """Monostatic noise std for a return at bistatic range ``rho`` on boresight."""
        x = np.array([[max(0.5 * rho, 1.0), 0.0, 0.0]])
        return float(self.sigmas(x)[0, 0])

    def clutter_intensity(self, i: int, rhos: np.ndarray) -> np.ndarray:
        lo, hi = clutter_support(self.cfg, i + 1)
        floor = 1e-3 / (hi - lo)
        dens = np.maximum(clutter_density(rhos, i + 1, self.cfg), floor)
        return self.clutter_rate * dens


class MultiTargetTracker:
    """SPA-based particle tracker with optional ARCE-driven resampling.

    Every call to :meth:`step` runs: prune, predict, birth from monostatic
    measurements, data association, (fusion), update, resample, estimate.
    """

    def __init__(
        self,
        cfg: ScenarioConfig,
        params: TrackerParams | None = None,
        fusion: FusionParams | None = None,
        rng: np.random.Generator | None = None,
        variant: str = "spa",
    ):
        if variant == "arce":
            raise ValueError("use ArceStandalone for the 'arce' variant")
        self.cfg = cfg
        self.params = params or TrackerParams(scan_period=cfg.scan_period)
        self.fusion = resolve_fusion(variant, fusion)
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.model = SensorModel(cfg, self.params.min_clutter_rate)
        self.beliefs: list[Belief] = []
        self._next_label = 0

    def step(self, scan: ScanData) -> ScanReport:
        p = self.params
        cfg = self.cfg
        geo = cfg.geometry
        beliefs = prune(self.beliefs, p.prune_threshold)
        beliefs = [predict(b, p, self.rng) for b in beliefs]

        births = initialize_births(
            scan.ranges[0], cfg.beam, p, geo, self.rng, self.model.monostatic_sigma, self._next_label
        )
        self._next_label += len(births)
        beliefs.extend(births)

        diags: list[FusionDiagnostic] = []
        if beliefs:
            means = np.array([b.mean_state()[:3] for b in beliefs])
            sigmas = self.model.sigmas(means)
            lam = [self.model.clutter_intensity(i, rr) for i, rr in enumerate(scan.ranges)]
            soft = associate(beliefs, scan.ranges, geo, sigmas, cfg.pd, lam, p.spa_max_iters, p.spa_tol, p.receiver_order)
            if self.fusion.mode != "off":
                hard = hard_associations(soft)
                beliefs, diags = fusion_step(
                    beliefs, scan.ranges, hard, geo, cfg.beam, self.fusion, sigmas, self.rng, cfg.clutter_range_max
                )
            beliefs = update(beliefs, scan.ranges, soft, sigmas, cfg.pd, lam, geo)
            beliefs = [self._maybe_resample(b) for b in beliefs]

        self.beliefs = beliefs
        ests = [Estimate(lbl, s, r) for lbl, s, r in estimate(beliefs, p.confirm_threshold)]
        return ScanReport(scan.scan_index, ests, len(beliefs), diags)

    def _maybe_resample(self, b: Belief) -> Belief:
        if b.existence() <= 0:
            return b
        if self.params.resample == "ess":
            if effective_sample_size(b.weights) >= self.params.ess_fraction * b.n_particles:
                return b
        out = resample(b, self.rng)
        return regularize(out, b, self.params.regularization, self.rng)

    def run(self, scans: Sequence[ScanData]) -> list[ScanReport]:
        return [self.step(s) for s in scans]


class ArceStandalone:
    """Memoryless per-scan ARCE localization with the physical beam.

    Each monostatic measurement is grouped with the nearest compatible
    bistatic range of every other receiver (gate: baseline plus ``n_gate``
    noise stds), then localized on its own.
    """

    def __init__(self, cfg: ScenarioConfig, n_sigma_range: float = 3.0, n_gate: float = 6.0, weighted: bool = False):
        self.cfg = cfg
        self.model = SensorModel(cfg, 0.0)
        self.n_sigma_range = n_sigma_range
        self.n_gate = n_gate
        self.weighted = weighted

    def group(self, scan: ScanData, rho1: float) -> tuple[np.ndarray, np.ndarray]:
        geo = self.cfg.geometry
        x = np.array([[max(0.5 * rho1, 1.0), 0.0, 0.0]])
        sig = self.model.sigmas(x)[0]
        rec, rho = [1], [rho1]
        for i in range(1, geo.n_receivers):
            rr = scan.ranges[i]
            if len(rr) == 0:
                continue
            d = np.abs(rr - rho1)
            j = int(np.argmin(d))
            if d[j] <= geo.baseline(i + 1) + self.n_gate * (sig[0] + sig[i]):
                rec.append(i + 1)
                rho.append(float(rr[j]))
        return np.array(rec), np.array(rho)

    def step(self, scan: ScanData) -> ScanReport:
        cfg = self.cfg
        ests = []
        for rho1 in scan.ranges[0]:
            if not rho1 > 0:
                continue
            rec, rho = self.group(scan, float(rho1))
            sig1 = self.model.monostatic_sigma(float(rho1))
            lo, hi = range_interval_from_monostatic(float(rho1), sig1, self.n_sigma_range)
            x = np.array([[max(0.5 * rho1, 1.0), 0.0, 0.0]])
            sigmas = self.model.sigmas(x)[0][rec - 1]
            inp = ArceInput(rec, rho, cfg.geometry, cfg.beam.with_range(lo, hi), sigmas, self.weighted)
            try:
                est = arce_localize(inp)
            except InfeasibleConstraints:
                continue
            ests.append(Estimate(-1, np.concatenate([est.position, np.zeros(3)]), 1.0))
        return ScanReport(scan.scan_index, ests, 0)

    def run(self, scans: Sequence[ScanData]) -> list[ScanReport]:
        return [self.step(s) for s in scans]


def make_tracker(
    cfg: ScenarioConfig,
    variant: str,
    params: TrackerParams | None = None,
    fusion: FusionParams | None = None,
    rng: np.random.Generator | None = None,
):
    if variant == "arce":
        f = fusion or FusionParams()
        return ArceStandalone(cfg, f.n_sigma_range, weighted=f.weighted)
    return MultiTargetTracker(cfg, params, fusion, rng, variant)


__all__ = [
    "ArceStandalone",
    "Estimate",
    "MultiTargetTracker",
    "ScanReport",
    "SensorModel",
    "VARIANTS",
    "make_tracker",
    "resolve_fusion",
]
