"""ARCE-driven particle resampling.

Between data association and the measurement update, each potential target
is localised by ARCE from its hard-associated measurements.  The
least-significant particles, holding at most a ``1 - alpha_r`` share of the
weight, get new positions drawn around that estimate; they share exactly
``1 - alpha_r`` of the weight between them and the kept particles are
rescaled to hold the remaining ``alpha_r``.  Total weight is unchanged.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .arce import ArceInput, InfeasibleConstraints, arce_localize, range_interval_from_monostatic
from .assoc import CLUTTER
from .geom import BeamConstraint, NodeGeometry, cart_to_sph_many, in_beam_many, intersect_beams, wrap_angle
from .tracker import Belief

log = logging.getLogger(__name__)

MODES = ("off", "nad", "ad")


@dataclass(frozen=True)
class FusionParams:
    """ARCE-driven resampling settings.

    ``mode=None`` defers to the tracker variant (``spa`` -> off, ``nad``,
    ``ad``); an explicit ``"off"`` disables fusion for every variant.
    """

    mode: str | None = None
    alpha_r: float = 0.7
    sigma_arce: float = 500.0
    c_tilde: float = 1.0
    beam_rejection: bool = False
    n_sigma_range: float = 3.0
    weighted: bool = False

    def __post_init__(self):
        if self.mode is not None and self.mode not in MODES:
            raise ValueError(f"fusion mode must be one of {MODES}")
        if not 0 < self.alpha_r < 1:
            raise ValueError("alpha_r must lie in (0, 1)")
        if not self.sigma_arce > 0:
            raise ValueError("sigma_arce must be > 0")
        if not self.c_tilde > 0:
            raise ValueError("c_tilde must be > 0")


@dataclass
class FusionDiagnostic:
    label: int
    mode: str
    n_measurements: int
    n_replaced: int = 0
    objective: float = math.nan
    active_constraints: tuple = ()
    skipped: bool = False
    reason: str = ""
    arce_position: np.ndarray | None = field(default=None, repr=False)


def virtual_beam(
    belief: Belief, physical: BeamConstraint, c_tilde: float, origin=(0.0, 0.0, 0.0), convention: str = "xz"
) -> BeamConstraint:
    """Tailored beam steered at the predicted particles, intersected with ``physical``.

    Center: weighted circular mean of particle azimuth/elevation.  Halfwidths:
    ``c_tilde`` times the weighted angular standard deviations.
    """
    w = belief.weights
    tot = w.sum()
    if not tot > 0:
        raise ValueError("virtual beam needs a belief with positive existence")
    _, az, el = cart_to_sph_many(belief.positions - np.asarray(origin, float), convention)

    def circ_stats(theta):
        mean = math.atan2(float(w @ np.sin(theta)), float(w @ np.cos(theta)))
        dev = wrap_angle(theta - mean)
        return mean, math.sqrt(max(float(w @ (dev * dev)) / tot, 0.0))

    az_c, az_s = circ_stats(az)
    el_c, el_s = circ_stats(el)
    tailored = BeamConstraint(az_c, c_tilde * az_s, el_c, c_tilde * el_s, physical.range_min, physical.range_max)
    return intersect_beams(physical, tailored)


def select_replacement_count(sorted_weights: np.ndarray, alpha_r: float) -> int:
    """Largest ``N_g`` whose ascending prefix holds at most ``1 - alpha_r`` of the weight."""
    w = np.asarray(sorted_weights, float)
    total = w.sum()
    if not total > 0:
        return 0
    prefix = np.cumsum(w)
    # relative slack absorbs summation round-off on exact ties (e.g. uniform weights)
    ok = prefix <= (1.0 - alpha_r) * total * (1.0 + 1e-12)
    return int(np.count_nonzero(ok)) if ok[0] else 0


@dataclass
class ResampleResult:
    belief: Belief
    replaced: np.ndarray  # indices of replaced particles
    prefix_fraction: float  # original weight share of the replaced set


def arce_resample_detail(
    belief: Belief, arce_pos: np.ndarray, params: FusionParams, rng: np.random.Generator
) -> ResampleResult:
    w = belief.weights
    total = w.sum()
    if not total > 0:
        raise ValueError("ARCE resampling needs positive existence")
    # equal weights (the norm right after resampling) are ordered at random,
    # so a tie never favours the copies of one resampled particle
    perm = rng.permutation(len(w))
    order = perm[np.argsort(w[perm], kind="stable")]
    n_g = select_replacement_count(w[order], params.alpha_r)
    if n_g == 0:
        return ResampleResult(belief.copy(), np.zeros(0, int), 0.0)
    repl = order[:n_g]
    kept = order[n_g:]
    prefix = float(np.cumsum(w[order])[n_g - 1] / total)
    parts = belief.particles.copy()
    parts[repl, :3] = np.asarray(arce_pos, float) + params.sigma_arce * rng.standard_normal((n_g, 3))
    new_w = np.empty_like(w)
    new_w[repl] = total * (1.0 - params.alpha_r) / n_g
    new_w[kept] = total * params.alpha_r * w[kept] / w[kept].sum()
    return ResampleResult(Belief(parts, new_w, belief.label), repl, prefix)


def arce_resample(belief: Belief, arce_pos: np.ndarray, params: FusionParams, rng: np.random.Generator) -> Belief:
    """Replace the lowest-weight particle positions with draws around ``arce_pos``."""
    return arce_resample_detail(belief, arce_pos, params, rng).belief


def associated_measurements(label_index: int, ranges: Sequence[np.ndarray], hard: Sequence[np.ndarray]):
    """(receivers, ranges) hard-associated with belief ``label_index`` across receivers."""
    rec, rho = [], []
    for i, labels in enumerate(hard):
        hit = np.flatnonzero(labels == label_index)
        if len(hit):
            rec.append(i + 1)
            rho.append(float(ranges[i][hit[0]]))
    return np.array(rec, int), np.array(rho, float)


def fusion_constraints(
    belief: Belief,
    receivers: np.ndarray,
    rhos: np.ndarray,
    sigma1: float,
    physical: BeamConstraint,
    params: FusionParams,
    origin,
    range_cap: float,
) -> BeamConstraint:
    if params.mode == "ad":
        beam = virtual_beam(belief, physical, params.c_tilde, origin)
    else:
        beam = physical
    mono = np.flatnonzero(receivers == 1)
    if len(mono):
        lo, hi = range_interval_from_monostatic(rhos[mono[0]], sigma1, params.n_sigma_range)
    else:
        lo, hi = 0.0, range_cap
    return beam.with_range(lo, hi)


def _reject_outside(belief: Belief, physical: BeamConstraint, origin) -> Belief:
    inside = in_beam_many(belief.positions, physical.with_range(0.0, math.inf), origin)
    total = belief.weights.sum()
    w = np.where(inside, belief.weights, 0.0)
    kept = w.sum()
    if kept <= 0:
        return belief
    return Belief(belief.particles, w * (total / kept), belief.label)


def fusion_step(
    beliefs: Sequence[Belief],
    ranges: Sequence[np.ndarray],
    hard: Sequence[np.ndarray],
    geometry: NodeGeometry,
    physical_beam: BeamConstraint,
    params: FusionParams,
    sigmas: np.ndarray,
    rng: np.random.Generator,
    range_cap: float = math.inf,
) -> tuple[list[Belief], list[FusionDiagnostic]]:
    """Apply ARCE-driven resampling to every belief with associated measurements.

    ``sigmas[l, i]`` is the range noise std of belief ``l`` at receiver ``i``.
    Beliefs without associated measurements, or whose constraints turn out
    infeasible, pass through untouched.
    """
    if params.mode in (None, "off"):
        return list(beliefs), []
    out, diags = [], []
    origin = geometry.tx_position
    for l, b in enumerate(beliefs):
        rec, rho = associated_measurements(l, ranges, hard)
        if len(rec) == 0 or b.existence() <= 0:
            out.append(b)
            diags.append(FusionDiagnostic(b.label, params.mode, 0, skipped=True, reason="no measurements"))
            continue
        try:
            beam = fusion_constraints(b, rec, rho, sigmas[l, 0], physical_beam, params, origin, range_cap)
            inp = ArceInput(
                rec, rho, geometry, beam, noise_sigmas=sigmas[l, rec - 1], weighted=params.weighted
            )
            est = arce_localize(inp)
        except InfeasibleConstraints as exc:
            log.debug("fusion skipped for belief %d: %s", b.label, exc)
            out.append(b)
            diags.append(FusionDiagnostic(b.label, params.mode, len(rec), skipped=True, reason=str(exc)))
            continue
        res = arce_resample_detail(b, est.position, params, rng)
        nb = res.belief
        if params.beam_rejection:
            nb = _reject_outside(nb, physical_beam, origin)
        out.append(nb)
        diags.append(
            FusionDiagnostic(
                b.label,
                params.mode,
                len(rec),
                n_replaced=len(res.replaced),
                objective=est.objective_value,
                active_constraints=tuple(sorted(est.active_constraints)),
                arce_position=est.position,
            )
        )
    return out, diags


__all__ = [
    "CLUTTER",
    "FusionDiagnostic",
    "FusionParams",
    "arce_resample",
    "arce_resample_detail",
    "fusion_step",
    "select_replacement_count",
    "virtual_beam",
]
