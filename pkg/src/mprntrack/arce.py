"""Angular and range constrained estimator (ARCE) for single-snapshot localization.

The estimate minimises the squared bistatic-range residual norm over the
region illuminated by the monostatic radar: a box in (range, azimuth,
elevation) around the transmitter.  The box is partitioned into its interior,
faces, edges and corners; every activity pattern is solved numerically with
the active coordinates pinned to their bounds, the candidates are projected
back onto the box, and the best one wins.

:func:`grid_oracle_localize` is an independent exhaustive-search check built
on ``scipy.optimize.least_squares``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from . import kernels
from .geom import XZ, BeamConstraint, NodeGeometry, bistatic_ranges, sph_to_cart

AXES = ("range", "azimuth", "elevation")
_LM_MAX_ITER = 200
_LM_TOL = 1e-10


class InfeasibleConstraints(ValueError):
    pass


@dataclass(frozen=True)
class ArceInput:
    """Associated measurements of one target plus the feasible box.

    ``receivers`` are 1-based indices into ``geometry.rx_positions`` and must
    be distinct.  ``noise_sigmas`` are only used when ``weighted`` is true.
    """

    receivers: np.ndarray
    ranges: np.ndarray
    geometry: NodeGeometry
    constraints: BeamConstraint
    noise_sigmas: np.ndarray | None = None
    weighted: bool = False
    convention: str = XZ

    def __post_init__(self):
        rec = np.asarray(self.receivers, dtype=int).reshape(-1)
        rng = np.asarray(self.ranges, dtype=float).reshape(-1)
        if rec.shape != rng.shape:
            raise ValueError("receivers and ranges must have equal length")
        if len(set(rec.tolist())) != len(rec):
            raise ValueError("at most one measurement per receiver")
        if np.any((rec < 1) | (rec > self.geometry.n_receivers)):
            raise ValueError("receiver index out of range")
        object.__setattr__(self, "receivers", rec)
        object.__setattr__(self, "ranges", rng)
        if self.noise_sigmas is not None:
            sig = np.asarray(self.noise_sigmas, float).reshape(-1)
            if sig.shape != rng.shape or np.any(sig <= 0):
                raise ValueError("noise_sigmas must be positive and aligned with ranges")
            object.__setattr__(self, "noise_sigmas", sig)
        if self.weighted and self.noise_sigmas is None:
            raise ValueError("weighted mode needs noise_sigmas")

    @property
    def n_measurements(self) -> int:
        return len(self.ranges)

    @property
    def underdetermined(self) -> bool:
        return self.n_measurements < 3

    def rx(self) -> np.ndarray:
        return self.geometry.rx_positions[self.receivers - 1]

    def inv_weights(self) -> np.ndarray:
        if self.weighted:
            return 1.0 / self.noise_sigmas
        return np.ones(self.n_measurements)

    def monostatic_range(self) -> float | None:
        hit = np.flatnonzero(self.receivers == 1)
        return float(self.ranges[hit[0]]) if len(hit) else None


@dataclass(frozen=True)
class ArceEstimate:
    position: np.ndarray
    objective_value: float
    active_constraints: frozenset = field(default_factory=frozenset)
    converged: bool = True
    spherical: tuple = (math.nan, math.nan, math.nan)


def objective(x, inp: ArceInput) -> float:
    """Sum of squared (optionally sigma-weighted) bistatic range residuals at ``x``."""
    x = np.asarray(x, float).reshape(-1, 3)
    h = np.linalg.norm(x[:, None, :] - inp.geometry.tx_position, axis=-1) + np.linalg.norm(
        x[:, None, :] - inp.rx()[None, :, :], axis=-1
    )
    r = (inp.ranges - h) * inp.inv_weights()
    val = (r * r).sum(axis=-1)
    return float(val[0]) if val.shape == (1,) else val


def range_interval_from_monostatic(rho1: float, sigma1: float, n_sigma: float = 3.0) -> tuple[float, float]:
    """Monostatic range interval ``rho1/2 +- n_sigma*sigma1/2``, clipped at zero.

    ``n_sigma = inf`` disables the range constraint.
    """
    if not rho1 > 0:
        raise ValueError("monostatic range must be positive")
    if math.isinf(n_sigma):
        return 0.0, math.inf
    half = 0.5 * n_sigma * sigma1
    return max(0.0, 0.5 * rho1 - half), 0.5 * rho1 + half


def _check_feasible(beam: BeamConstraint) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = beam.bounds()
    if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
        raise InfeasibleConstraints("infeasible constraints: empty interval")
    if not hi[0] > 0:
        raise InfeasibleConstraints("infeasible constraints: range interval excludes every point but the origin")
    return lo, hi


def _conv_code(convention: str) -> int:
    return 0 if convention == XZ else 1


def _to_position(p, origin, convention) -> np.ndarray:
    return origin + sph_to_cart(p[0], p[1], p[2], convention)


def _active(p, lo, hi) -> frozenset:
    out = []
    for k, name in enumerate(AXES):
        tol = 1e-9 * max(1.0, abs(lo[k]))
        if abs(p[k] - lo[k]) <= tol:
            out.append(f"{name}_min")
        if math.isfinite(hi[k]) and abs(p[k] - hi[k]) <= 1e-9 * max(1.0, abs(hi[k])):
            out.append(f"{name}_max")
    return frozenset(out)


def _range_seed(inp: ArceInput, lo: float, hi: float) -> float:
    mono = inp.monostatic_range()
    if mono is not None:
        guess = 0.5 * mono
    else:
        # bistatic range is roughly twice the target range when baselines are short
        guess = 0.5 * float(np.mean(inp.ranges))
    if not math.isfinite(hi):
        return max(guess, lo)
    return min(max(guess, lo), hi)


def _patterns(lo, hi):
    """Activity patterns per axis: None (free), 'lo' or 'hi'."""
    per_axis = []
    for k in range(3):
        if hi[k] - lo[k] == 0:
            per_axis.append(("lo",))
        elif math.isfinite(hi[k]):
            per_axis.append((None, "lo", "hi"))
        else:
            per_axis.append((None, "lo"))
    return list(itertools.product(*per_axis))


def arce_localize(inp: ArceInput, n_angle_seeds: int = 3) -> ArceEstimate:
    """Constrained least-squares position estimate from associated bistatic ranges.

    Raises :class:`InfeasibleConstraints` when the feasible box is empty.
    """
    if inp.n_measurements == 0:
        raise ValueError("ARCE needs at least one measurement")
    lo, hi = _check_feasible(inp.constraints)
    origin = inp.geometry.tx_position
    tx = inp.geometry.tx_position
    rx = np.ascontiguousarray(inp.rx())
    rho = np.ascontiguousarray(inp.ranges)
    inv_w = np.ascontiguousarray(inp.inv_weights())
    conv = _conv_code(inp.convention)
    r_seed = _range_seed(inp, lo[0], hi[0])

    def fractions(n):
        return [(j + 0.5) / n for j in range(n)]

    candidates = []  # (objective, params, converged)

    def run(pattern, seeds):
        free = [a is None for a in pattern]
        for seed in seeds:
            p0 = np.array(seed, float)
            for k, a in enumerate(pattern):
                if a == "lo":
                    p0[k] = lo[k]
                elif a == "hi":
                    p0[k] = hi[k]
            p, _, ok, _ = kernels.lm_solve(origin, tx, rx, rho, inv_w, p0, free, conv, _LM_MAX_ITER, _LM_TOL)
            p = np.clip(p, lo, hi)
            val = objective(_to_position(p, origin, inp.convention), inp)
            candidates.append((val, p, bool(ok)))

    def box_mid(k):
        return 0.5 * (lo[k] + hi[k]) if math.isfinite(hi[k]) else r_seed

    patterns = _patterns(lo, hi)
    # interior first, so its best point can seed the boundary solves
    patterns.sort(key=lambda pat: -sum(a is None for a in pat))
    for pat in patterns:
        n_free = sum(a is None for a in pat)
        if n_free == 0:
            run(pat, [(lo[0], lo[1], lo[2])])
            continue
        if n_free == 3 or (n_free == 2 and pat[0] is not None):
            # angular sub-box is free: spread seeds over it
            az_seeds = [lo[1] + f * (hi[1] - lo[1]) for f in fractions(n_angle_seeds)] if pat[1] is None else [lo[1]]
            el_seeds = [lo[2] + f * (hi[2] - lo[2]) for f in fractions(n_angle_seeds)] if pat[2] is None else [lo[2]]
            seeds = [(r_seed, a, e) for a in az_seeds for e in el_seeds]
        else:
            seeds = [(r_seed, box_mid(1), box_mid(2))]
        if candidates:
            best = min(candidates, key=lambda c: c[0])[1]
            seeds.append(tuple(np.clip(best, lo, hi)))
        run(pat, seeds)

    best_val = min(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] <= best_val * (1 + 1e-12) + 1e-300]
    val, p, ok = min(tied, key=lambda c: (c[1][0], c[1][1], c[1][2]))
    return ArceEstimate(
        position=_to_position(p, origin, inp.convention),
        objective_value=float(val),
        active_constraints=_active(p, lo, hi),
        converged=ok,
        spherical=(float(p[0]), float(p[1]), float(p[2])),
    )


def grid_oracle_localize(
    inp: ArceInput, grid_resolution: int | Sequence[int] = 41, n_refine: int = 8
) -> ArceEstimate:
    """Brute-force ARCE reference: full grid search, then bounded local refinement.

    The ``n_refine`` best grid nodes are each polished with a bounded
    trust-region least-squares solve; the overall best point is returned.
    Deterministic for a given input.
    """
    if inp.n_measurements == 0:
        raise ValueError("oracle needs at least one measurement")
    lo, hi = _check_feasible(inp.constraints)
    if not math.isfinite(hi[0]):
        raise ValueError("grid oracle needs a bounded range interval")
    res = np.broadcast_to(np.asarray(grid_resolution, int), (3,))
    axes = [np.linspace(lo[k], hi[k], res[k]) if hi[k] > lo[k] else np.array([lo[k]]) for k in range(3)]
    R, A, E = np.meshgrid(*axes, indexing="ij")
    params = np.stack([R.ravel(), A.ravel(), E.ravel()], axis=1)
    origin = inp.geometry.tx_position
    pts = origin + sph_to_cart(params[:, 0], params[:, 1], params[:, 2], inp.convention)
    vals = np.asarray(objective(pts, inp)).reshape(-1)
    order = np.argsort(vals, kind="stable")[:n_refine]

    free = np.array([hi[k] > lo[k] for k in range(3)])
    inv_w = inp.inv_weights()
    tx = inp.geometry.tx_position
    rx = inp.rx()

    def resid(q, base):
        p = base.copy()
        p[free] = q
        x = origin + sph_to_cart(p[0], p[1], p[2], inp.convention)
        return (inp.ranges - bistatic_ranges(x[None, :], tx, rx)) * inv_w

    best = None
    for j in order:
        base = params[j].copy()
        if free.any():
            sol = least_squares(
                resid,
                base[free],
                args=(base,),
                bounds=(lo[free], hi[free]),
                method="trf",
                x_scale="jac",
                xtol=1e-14,
                ftol=1e-14,
                gtol=1e-14,
                max_nfev=2000,
            )
            p = base.copy()
            p[free] = np.clip(sol.x, lo[free], hi[free])
            ok = bool(sol.status > 0)
        else:
            p, ok = base, True
        x = _to_position(p, origin, inp.convention)
        val = float(objective(x, inp))
        if best is None or val < best[0]:
            best = (val, p, x, ok)
    val, p, x, ok = best
    return ArceEstimate(x, val, _active(p, lo, hi), ok, (float(p[0]), float(p[1]), float(p[2])))
