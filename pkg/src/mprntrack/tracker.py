"""Particle-based Bernoulli potential-target filter.

A :class:`Belief` stores ``N_p`` six-dimensional particles (position,
velocity) whose weights sum to the probability that the potential target
exists.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import kernels
from .assoc import LikelihoodTable, SoftAssociation, spa_iterate, spatial_likelihoods
from .geom import BeamConstraint, NodeGeometry, sph_to_cart


@dataclass
class Belief:
    particles: np.ndarray  # (N_p, 6): x, y, z, vx, vy, vz
    weights: np.ndarray  # (N_p,)
    label: int

    def existence(self) -> float:
        return float(self.weights.sum())

    @property
    def n_particles(self) -> int:
        return self.weights.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.particles[:, :3]

    def mean_state(self) -> np.ndarray:
        tot = self.weights.sum()
        if tot <= 0:
            return self.particles.mean(axis=0)
        return self.weights @ self.particles / tot

    def copy(self) -> "Belief":
        return Belief(self.particles.copy(), self.weights.copy(), self.label)


@dataclass(frozen=True)
class TrackerParams:
    n_particles: int = 500
    p_s: float = 0.999
    p_b: float = 0.01
    confirm_threshold: float = 0.5
    prune_threshold: float = 1e-3
    process_noise_accel: float = 0.05  # m/s^2, per axis
    max_speed: float = 15.0  # m/s
    velocity_kappa: float = 2.0  # init velocity std = max_speed / kappa
    scan_period: float = 10.0
    resample: str = "always"  # or "ess"
    ess_fraction: float = 0.5
    spa_max_iters: int = 20
    spa_tol: float = 1e-6
    min_clutter_rate: float = 0.01  # floor on the clutter rate assumed by the filter
    regularization: float = 0.0  # post-resampling kernel jitter, in units of the optimal bandwidth
    receiver_order: str = "sequential"  # or "parallel": every receiver associates against the prediction

    def __post_init__(self):
        if not 0 < self.p_s <= 1:
            raise ValueError("p_s must lie in (0, 1]")
        if not 0 < self.p_b < 1:
            raise ValueError("p_b must lie in (0, 1)")
        for name in ("confirm_threshold", "prune_threshold"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.resample not in ("always", "ess"):
            raise ValueError("resample must be 'always' or 'ess'")
        if self.receiver_order not in ("sequential", "parallel"):
            raise ValueError("receiver_order must be 'sequential' or 'parallel'")

    def with_(self, **kw) -> "TrackerParams":
        return replace(self, **kw)


def predict(belief: Belief, params: TrackerParams, rng: np.random.Generator) -> Belief:
    """Nearly-constant-velocity propagation; weights scaled by the survival probability."""
    dt = params.scan_period
    s = belief.particles
    out = s.copy()
    out[:, :3] += s[:, 3:] * dt
    if params.process_noise_accel > 0:
        a = rng.standard_normal((s.shape[0], 3)) * params.process_noise_accel
        out[:, :3] += 0.5 * a * dt * dt
        out[:, 3:] += a * dt
    return Belief(out, belief.weights * params.p_s, belief.label)


def initialize_births(
    monostatic_ranges: Sequence[float],
    beam: BeamConstraint,
    params: TrackerParams,
    geometry: NodeGeometry,
    rng: np.random.Generator,
    sigma1,
    first_label: int = 0,
    convention: str = "xz",
) -> list[Belief]:
    """One new potential target per monostatic measurement.

    Particle range ~ N(rho/2, sigma1/2) with azimuth and elevation uniform
    inside the beam; velocity ~ N(0, (max_speed/kappa)^2 I); weights p_b/N_p.
    ``sigma1`` is the monostatic noise std, either a scalar or a callable of
    the measured range.
    """
    out = []
    n = params.n_particles
    v_std = params.max_speed / params.velocity_kappa
    az_lo, az_hi = beam.azimuth_interval
    el_lo, el_hi = beam.elevation_interval
    for j, rho in enumerate(np.asarray(monostatic_ranges, float)):
        sig = float(sigma1(rho)) if callable(sigma1) else float(sigma1)
        r = 0.5 * rho + 0.5 * sig * rng.standard_normal(n)
        az = rng.uniform(az_lo, az_hi, n)
        el = rng.uniform(el_lo, el_hi, n)
        parts = np.empty((n, 6))
        parts[:, :3] = geometry.tx_position + sph_to_cart(np.abs(r), az, el, convention)
        parts[:, 3:] = rng.standard_normal((n, 3)) * v_std
        out.append(Belief(parts, np.full(n, params.p_b / n), first_label + j))
    return out


def build_likelihood_table(
    beliefs: Sequence[Belief],
    ranges: Sequence[np.ndarray],
    geometry: NodeGeometry,
    sigmas: np.ndarray,
    pd: np.ndarray,
    clutter_intensity: Sequence[np.ndarray],
) -> LikelihoodTable:
    """Spatial likelihoods of every (belief, measurement) pair at every receiver.

    ``sigmas`` has shape ``(L, S)``: the range noise std each belief assumes
    at each receiver.
    """
    n_t = len(beliefs)
    lk = []
    for i, rr in enumerate(ranges):
        g = np.zeros((n_t, len(rr)))
        rx = geometry.rx_positions[i]
        for l, b in enumerate(beliefs):
            g[l] = spatial_likelihoods(b.positions, b.weights, rr, sigmas[l, i], geometry.tx_position, rx)
        lk.append(g)
    existence = np.array([b.existence() for b in beliefs])
    return LikelihoodTable(lk, existence, pd, list(clutter_intensity))


def _receiver_factors(b: Belief, i: int, rr, nu_l, sigma, pd, lam, geometry: NodeGeometry) -> np.ndarray:
    if len(rr):
        coeffs = nu_l * pd[i] / np.maximum(np.asarray(lam, float), 1e-300)
    else:
        coeffs = np.zeros(0)
    return kernels.update_factors(b.positions, geometry.tx_position, geometry.rx_positions[i], rr, coeffs, sigma, 1.0 - pd[i])


def associate(
    beliefs: Sequence[Belief],
    ranges: Sequence[np.ndarray],
    geometry: NodeGeometry,
    sigmas: np.ndarray,
    pd: np.ndarray,
    clutter_intensity: Sequence[np.ndarray],
    max_iters: int = 20,
    tol: float = 1e-6,
    order: str = "sequential",
) -> SoftAssociation:
    """SPA data association for every receiver of one scan.

    With ``order="sequential"`` receiver ``i`` associates against the beliefs
    already conditioned on receivers ``1 .. i-1`` (weights only; particles are
    untouched), so one target's detections at several receivers are not
    counted as independent evidence for two competing beliefs.  With
    ``"parallel"`` every receiver sees the predicted beliefs.
    """
    if order == "parallel":
        table = build_likelihood_table(beliefs, ranges, geometry, sigmas, pd, clutter_intensity)
        return spa_iterate(table, max_iters, tol)
    work = [Belief(b.particles, b.weights.copy(), b.label) for b in beliefs]
    tps, mps, msgs, conv, iters = [], [], [], [], []
    n_updates = 0
    for i, rr in enumerate(ranges):
        g = np.zeros((len(work), len(rr)))
        for l, b in enumerate(work):
            g[l] = spatial_likelihoods(b.positions, b.weights, rr, sigmas[l, i], geometry.tx_position, geometry.rx_positions[i])
        existence = np.array([b.existence() for b in work])
        table = LikelihoodTable([g], existence, pd[i : i + 1], [clutter_intensity[i]])
        soft = spa_iterate(table, max_iters, tol)
        tps.append(soft.target_probs[0])
        mps.append(soft.measurement_probs[0])
        msgs.append(soft.messages[0])
        conv.extend(soft.converged)
        iters.extend(soft.iterations)
        n_updates += soft.n_message_updates
        if i + 1 < len(ranges):
            for l, b in enumerate(work):
                f = _receiver_factors(b, i, rr, soft.messages[0][l], sigmas[l, i], pd, clutter_intensity[i], geometry)
                b.weights = _bernoulli_normalize(b.weights, b.weights * f)
    return SoftAssociation(tps, mps, msgs, conv, iters, n_updates)


def _bernoulli_normalize(prior: np.ndarray, w: np.ndarray) -> np.ndarray:
    r = prior.sum()
    mass = w.sum()
    denom = mass + max(0.0, 1.0 - r)
    if not np.isfinite(mass) or denom <= 0:
        return np.zeros_like(prior)
    w = w / denom
    tot = w.sum()
    if tot > 1.0:
        w /= tot
    return w


def update(
    beliefs: Sequence[Belief],
    ranges: Sequence[np.ndarray],
    soft: SoftAssociation,
    sigmas: np.ndarray,
    pd: np.ndarray,
    clutter_intensity: Sequence[np.ndarray],
    geometry: NodeGeometry,
) -> list[Belief]:
    """Bernoulli measurement update with the SPA messages of every receiver.

    Per receiver ``i`` each particle weight is multiplied by
    ``(1 - pd_i) + sum_m nu[l, m] * pd_i * N(rho_m; h_i(x_p), sigma) / lambda_m``;
    the result is normalised against the non-existence mass so that the new
    weights sum to the posterior existence probability.
    """
    out = []
    for l, b in enumerate(beliefs):
        factor = np.ones(b.n_particles)
        for i, rr in enumerate(ranges):
            factor *= _receiver_factors(b, i, rr, soft.messages[i][l], sigmas[l, i], pd, clutter_intensity[i], geometry)
        out.append(Belief(b.particles, _bernoulli_normalize(b.weights, b.weights * factor), b.label))
    return out


def prune(beliefs: Sequence[Belief], prune_threshold: float) -> list[Belief]:
    """Drop beliefs whose existence is below the threshold (the threshold itself survives)."""
    return [b for b in beliefs if b.existence() >= prune_threshold]


def effective_sample_size(weights: np.ndarray) -> float:
    tot = weights.sum()
    if tot <= 0:
        return 0.0
    w = weights / tot
    return float(1.0 / np.sum(w * w))


def resample(belief: Belief, rng: np.random.Generator) -> Belief:
    """Systematic resampling; the resampled weights are all existence / N_p."""
    r = belief.existence()
    if r <= 0:
        raise ValueError("cannot resample a belief with zero existence")
    idx = kernels.systematic_indices(belief.weights, rng.random())
    n = belief.n_particles
    return Belief(belief.particles[idx], np.full(n, r / n), belief.label)


def regularize(belief: Belief, reference: Belief, scale: float, rng: np.random.Generator) -> Belief:
    """Gaussian kernel jitter after resampling (regularized particle filter).

    The per-dimension jitter std is ``scale * h_opt`` times the weighted std
    of ``reference`` (the pre-resampling belief), with the Gaussian-kernel
    optimal bandwidth ``h_opt = (4 / (N (d + 2)))^(1 / (d + 4))``.
    """
    if scale <= 0:
        return belief
    n, d = belief.particles.shape
    w = reference.weights
    tot = w.sum()
    if tot <= 0:
        return belief
    mean = w @ reference.particles / tot
    std = np.sqrt(np.maximum(w @ (reference.particles - mean) ** 2 / tot, 0.0))
    h = (4.0 / (n * (d + 2))) ** (1.0 / (d + 4))
    parts = belief.particles + rng.standard_normal((n, d)) * (scale * h * std)
    return Belief(parts, belief.weights, belief.label)


def estimate(beliefs: Sequence[Belief], confirm_threshold: float) -> list[tuple[int, np.ndarray, float]]:
    """MMSE state of every belief whose existence reaches ``confirm_threshold``."""
    out = []
    for b in beliefs:
        r = min(b.existence(), 1.0)  # summation round-off can exceed 1 by an ulp
        if r >= confirm_threshold:
            out.append((b.label, b.mean_state(), r))
    return out
