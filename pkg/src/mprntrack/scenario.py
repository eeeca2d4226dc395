"""Ground truth trajectories and per-scan bistatic range measurements."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .geom import BeamConstraint, NodeGeometry, bistatic_ranges, sph_to_cart

SPEED_OF_LIGHT = 299_792_458.0
CLUTTER = -1  # truth label of a false alarm

# receiver layout of the simulated network (meters); receiver 1 is the monostatic radar
REFERENCE_RX_POSITIONS = (
    (0.0, 0.0, 0.0),
    (916.0, 941.0, 950.0),
    (973.0, 541.0, 764.0),
    (955.0, 483.0, 191.0),
    (936.0, 350.0, 477.0),
)


def reference_geometry() -> NodeGeometry:
    return NodeGeometry(np.zeros(3), np.array(REFERENCE_RX_POSITIONS))


def reference_beam() -> BeamConstraint:
    """Physical beam: boresight +X, 20 degree half-beam in azimuth and elevation."""
    return BeamConstraint.from_degrees(0.0, 20.0, 0.0, 20.0)


@dataclass(frozen=True)
class TargetSpec:
    initial_position: np.ndarray
    velocity: np.ndarray

    @classmethod
    def radial(cls, start_range: float, azimuth_deg: float, elevation_deg: float, speed: float, origin=(0, 0, 0)):
        """Target on a ray from ``origin`` moving straight towards it at ``speed``."""
        u = sph_to_cart(1.0, math.radians(azimuth_deg), math.radians(elevation_deg))
        origin = np.asarray(origin, float)
        return cls(origin + start_range * u, -speed * u)


@dataclass
class ScenarioConfig:
    geometry: NodeGeometry
    beam: BeamConstraint
    targets: list[TargetSpec]
    scan_period: float = 10.0
    n_scans: int = 100
    snr_ref_db: Sequence[float] | float = 0.0
    ref_range: float = 30_000.0
    bandwidth: float = 20e6
    pd: Sequence[float] | float = 1.0
    clutter_mean: float = 0.0
    clutter_range_max: float = 70_000.0
    clutter_law: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        s = self.geometry.n_receivers
        self.snr_ref_db = np.broadcast_to(np.asarray(self.snr_ref_db, float), (s,)).copy()
        self.pd = np.broadcast_to(np.asarray(self.pd, float), (s,)).copy()
        if self.n_scans < 1:
            raise ValueError("n_scans must be >= 1")
        if not np.all((self.pd >= 0) & (self.pd <= 1)):
            raise ValueError("detection probabilities must lie in [0, 1]")
        if self.clutter_mean < 0:
            raise ValueError("clutter_mean must be >= 0")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")
        if self.clutter_law not in ("uniform", "linear"):
            raise ValueError(f"unknown clutter law {self.clutter_law!r}")

    @property
    def n_receivers(self) -> int:
        return self.geometry.n_receivers

    @property
    def snr_ref_linear(self) -> np.ndarray:
        return 10.0 ** (np.asarray(self.snr_ref_db) / 10.0)


@dataclass(frozen=True)
class Measurement:
    receiver_index: int  # 1-based
    bistatic_range: float
    scan_index: int


@dataclass
class ScanData:
    """Measurements of one scan, one array of bistatic ranges per receiver."""

    scan_index: int
    ranges: list[np.ndarray]
    _labels: list[np.ndarray] = field(default_factory=list, repr=False, compare=False)

    @property
    def n_receivers(self) -> int:
        return len(self.ranges)

    def counts(self) -> list[int]:
        return [len(r) for r in self.ranges]

    def measurements(self) -> Iterator[Measurement]:
        for i, rr in enumerate(self.ranges):
            for rho in rr:
                yield Measurement(i + 1, float(rho), self.scan_index)


def truth_labels(scan: ScanData) -> list[np.ndarray]:
    """Per-receiver origin labels (target index, or ``CLUTTER``); for evaluation only."""
    return scan._labels


def generate_trajectories(cfg: ScenarioConfig) -> np.ndarray:
    """Constant-velocity truth, shape ``(L, n_scans + 1, 6)``.

    Index ``k`` holds the state at time ``k * scan_period``; scans observe
    ``k = 1 .. n_scans``.
    """
    k = np.arange(cfg.n_scans + 1)[:, None] * cfg.scan_period
    out = np.empty((len(cfg.targets), cfg.n_scans + 1, 6))
    for l, t in enumerate(cfg.targets):
        p0 = np.asarray(t.initial_position, float)
        v = np.asarray(t.velocity, float)
        out[l, :, :3] = p0 + k * v
        out[l, :, 3:] = v
    return out


def snr_at(x, receiver_index: int, cfg: ScenarioConfig) -> float:
    """Linear SNR of the (tx, rx_i) pair for a target at ``x`` (bistatic R^-2 R^-2 law)."""
    return float(snr_many(np.asarray(x, float)[None, :], receiver_index, cfg)[0])


def snr_many(points: np.ndarray, receiver_index: int, cfg: ScenarioConfig) -> np.ndarray:
    geo = cfg.geometry
    rt2 = ((points - geo.tx_position) ** 2).sum(axis=-1)
    rr2 = ((points - geo.rx_positions[receiver_index - 1]) ** 2).sum(axis=-1)
    return cfg.snr_ref_linear[receiver_index - 1] * cfg.ref_range**4 / (rt2 * rr2)


def range_noise_sigma(snr_linear, bandwidth: float):
    """Range-domain noise std: ``c / (B * sqrt(2 * SNR))``."""
    snr = np.asarray(snr_linear, dtype=float)
    if np.any(snr <= 0):
        raise ValueError("SNR must be positive")
    sigma = SPEED_OF_LIGHT / (bandwidth * np.sqrt(2.0 * snr))
    return float(sigma) if sigma.ndim == 0 else sigma


def noise_sigmas_at(x, cfg: ScenarioConfig) -> np.ndarray:
    """Per-receiver range noise std for a target at ``x``."""
    x = np.asarray(x, float)[None, :]
    snr = np.array([snr_many(x, i + 1, cfg)[0] for i in range(cfg.n_receivers)])
    return range_noise_sigma(snr, cfg.bandwidth)


def clutter_support(cfg: ScenarioConfig, receiver_index: int) -> tuple[float, float]:
    return cfg.geometry.baseline(receiver_index), cfg.clutter_range_max


def clutter_density(rho, receiver_index: int, cfg: ScenarioConfig):
    """Spatial pdf of a false alarm's bistatic range at receiver ``receiver_index``."""
    lo, hi = clutter_support(cfg, receiver_index)
    rho = np.asarray(rho, float)
    inside = (rho >= lo) & (rho <= hi)
    if cfg.clutter_law == "uniform":
        dens = np.full(rho.shape, 1.0 / (hi - lo))
    else:
        dens = 2.0 * (rho - lo) / (hi - lo) ** 2
    return np.where(inside, dens, 0.0)


def _draw_clutter(n: int, lo: float, hi: float, law: str, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(n)
    if law == "uniform":
        return lo + (hi - lo) * u
    return lo + (hi - lo) * np.sqrt(u)


def simulate_scan(
    truth_positions: np.ndarray, cfg: ScenarioConfig, rng: np.random.Generator, scan_index: int = 0
) -> ScanData:
    """Draw one scan of detections and clutter for targets at ``truth_positions`` (L, 3)."""
    truth_positions = np.asarray(truth_positions, float).reshape(-1, 3)
    geo = cfg.geometry
    ranges, labels = [], []
    for i in range(cfg.n_receivers):
        rx = geo.rx_positions[i]
        vals: list[float] = []
        labs: list[int] = []
        if len(truth_positions):
            detected = rng.random(len(truth_positions)) < cfg.pd[i]
            sig = range_noise_sigma(snr_many(truth_positions, i + 1, cfg), cfg.bandwidth)
            noise = rng.standard_normal(len(truth_positions)) * sig
            true_r = bistatic_ranges(truth_positions, geo.tx_position, rx)
            for l in np.flatnonzero(detected):
                vals.append(true_r[l] + noise[l])
                labs.append(int(l))
        n_clutter = rng.poisson(cfg.clutter_mean) if cfg.clutter_mean > 0 else 0
        if n_clutter:
            lo, hi = clutter_support(cfg, i + 1)
            vals.extend(_draw_clutter(n_clutter, lo, hi, cfg.clutter_law, rng))
            labs.extend([CLUTTER] * n_clutter)
        order = rng.permutation(len(vals))
        ranges.append(np.asarray(vals, float)[order])
        labels.append(np.asarray(labs, int)[order])
    return ScanData(scan_index, ranges, labels)


def simulate(cfg: ScenarioConfig, rng: np.random.Generator) -> tuple[np.ndarray, list[ScanData]]:
    """Trajectories plus scans ``1 .. n_scans``."""
    truth = generate_trajectories(cfg)
    scans = [simulate_scan(truth[:, k, :3], cfg, rng, scan_index=k) for k in range(1, cfg.n_scans + 1)]
    return truth, scans


def write_scans_csv(path, scans: Sequence[ScanData]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scan", "receiver", "range_m"])
        for s in scans:
            for m in s.measurements():
                w.writerow([s.scan_index, m.receiver_index, repr(m.bistatic_range)])
