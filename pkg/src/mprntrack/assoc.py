"""Sum-product (loopy belief propagation) data association, one receiver at a time.

For receiver ``i`` every potential target ``l`` carries a target-oriented
association variable ``a_l`` (0 = missed, ``m`` = measurement m) and every
measurement a measurement-oriented variable ``b_m`` (0 = clutter, ``l`` =
target l).  Writing ``beta[l, 0] = 1 - r_l * pd`` and
``beta[l, m] = r_l * pd * g_lm / lambda_m``, the messages iterate as

    phi[l, m] = beta[l, m] / (beta[l, 0] + sum_{m' != m} beta[l, m'] nu[l, m'])
    nu[l, m]  = 1 / (1 + sum_{l' != l} phi[l', m])

starting from ``nu = 1``.  Leave-one-out sums are formed from prefix and
suffix sums, so no large term is ever subtracted from a small total.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels

_TINY = 1e-300
_HUGE = 1e250
CLUTTER = -1


@dataclass
class LikelihoodTable:
    """Inputs to the association of one scan.

    ``likelihoods[i]`` is the ``(L, M_i)`` matrix of spatial likelihoods
    conditioned on existence; ``clutter_intensity[i]`` is the false-alarm
    intensity at each of receiver ``i``'s measurements (a scalar broadcasts).
    """

    likelihoods: list[np.ndarray]
    existence: np.ndarray
    pd: np.ndarray
    clutter_intensity: list[np.ndarray]

    def __post_init__(self):
        self.existence = np.asarray(self.existence, float).reshape(-1)
        self.pd = np.asarray(self.pd, float).reshape(-1)
        n_t = self.existence.shape[0]
        lk, ci = [], []
        for i, g in enumerate(self.likelihoods):
            g = np.asarray(g, float)
            if g.ndim != 2:
                g = g.reshape(n_t, -1)
            if g.shape[0] != n_t:
                raise ValueError("likelihood rows must match the number of targets")
            if np.any(g < 0) or not np.all(np.isfinite(g)):
                raise ValueError("likelihoods must be finite and non-negative")
            lk.append(g)
            ci.append(np.broadcast_to(np.asarray(self.clutter_intensity[i], float), (g.shape[1],)).copy())
        self.likelihoods = lk
        self.clutter_intensity = ci

    @property
    def n_receivers(self) -> int:
        return len(self.likelihoods)

    @property
    def n_targets(self) -> int:
        return self.existence.shape[0]

    def betas(self, i: int) -> np.ndarray:
        """``(L, M_i + 1)`` factor values; column 0 is the missed-detection entry."""
        r = self.existence[:, None]
        pd = self.pd[i]
        g = self.likelihoods[i]
        lam = np.maximum(self.clutter_intensity[i], _TINY)
        out = np.empty((g.shape[0], g.shape[1] + 1))
        out[:, 0] = 1.0 - r[:, 0] * pd
        out[:, 1:] = r * pd * g / lam[None, :]
        return out


@dataclass
class SoftAssociation:
    """Per-receiver outputs of :func:`spa_iterate`.

    ``target_probs[i][l, m]``: p(a_l = m), column 0 = missed.
    ``measurement_probs[i][m, l]``: p(b_m = l), column 0 = clutter.
    ``messages[i][l, m]``: extrinsic measurement-to-target message, used by
    the particle update.
    """

    target_probs: list[np.ndarray]
    measurement_probs: list[np.ndarray]
    messages: list[np.ndarray]
    converged: list[bool] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    n_message_updates: int = 0


def _leave_one_out_sum(x: np.ndarray, axis: int) -> np.ndarray:
    """``out[..j..] = sum_{k != j} x[..k..]`` via prefix/suffix sums."""
    x = np.moveaxis(x, axis, -1)
    n = x.shape[-1]
    pre = np.zeros(x.shape[:-1] + (n + 1,))
    np.cumsum(x, axis=-1, out=pre[..., 1:])
    suf = np.zeros(x.shape[:-1] + (n + 1,))
    np.cumsum(x[..., ::-1], axis=-1, out=suf[..., 1:])
    suf = suf[..., ::-1]  # suf[k] = sum_{j >= k}
    out = pre[..., :n] + suf[..., 1:]
    return np.moveaxis(out, -1, axis)


def spa_messages(beta: np.ndarray, max_iters: int = 20, tol: float = 1e-6):
    """Run the message recursion for one receiver.

    Returns ``(phi, nu, converged, iterations)``.
    """
    n_t, m1 = beta.shape
    n_m = m1 - 1
    nu = np.ones((n_t, n_m))
    phi = np.zeros((n_t, n_m))
    if n_t == 0 or n_m == 0:
        return phi, nu, True, 0
    b0 = beta[:, :1]
    bm = beta[:, 1:]
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        others = b0 + _leave_one_out_sum(bm * nu, axis=1)
        phi = _ratio(bm, others)
        nu_new = 1.0 / (1.0 + _leave_one_out_sum(phi, axis=0))
        delta = np.max(np.abs(nu_new - nu))
        nu = nu_new
        if delta < tol:
            converged = True
            break
    # final target-to-measurement messages consistent with the returned nu
    others = b0 + _leave_one_out_sum(bm * nu, axis=1)
    phi = _ratio(bm, others)
    return phi, nu, converged, it


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # a certain detection (no missed-detection mass, no competitor) gives an
    # unbounded ratio; cap it so downstream normalisation stays finite
    with np.errstate(over="ignore", divide="ignore"):
        return np.minimum(num / np.maximum(den, _TINY), _HUGE)


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    s = x.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(s > 0, x / np.where(s > 0, s, 1.0), 0.0)
    # a row with no mass at all falls back to its first (missed/clutter) entry
    empty = s[:, 0] <= 0
    if np.any(empty):
        out[empty, 0] = 1.0
    return out


def association_marginals(beta: np.ndarray, phi: np.ndarray, nu: np.ndarray):
    """Target- and measurement-oriented pmfs from converged messages."""
    n_t, m1 = beta.shape
    tp = np.empty((n_t, m1))
    tp[:, 0] = beta[:, 0]
    tp[:, 1:] = beta[:, 1:] * nu
    mp = np.empty((m1 - 1, n_t + 1))
    mp[:, 0] = 1.0
    mp[:, 1:] = phi.T
    return _normalize_rows(tp), _normalize_rows(mp)


def spa_iterate(table: LikelihoodTable, max_iters: int = 20, tol: float = 1e-6) -> SoftAssociation:
    """Iterative SPA association for every receiver of one scan."""
    tps, mps, msgs, conv, iters = [], [], [], [], []
    n_updates = 0
    for i in range(table.n_receivers):
        beta = table.betas(i)
        phi, nu, ok, it = spa_messages(beta, max_iters, tol)
        tp, mp = association_marginals(beta, phi, nu)
        tps.append(tp)
        mps.append(mp)
        msgs.append(nu)
        conv.append(ok)
        iters.append(it)
        # one phi and one nu update per (target, measurement) pair per iteration
        n_updates += 2 * it * beta.shape[0] * (beta.shape[1] - 1)
    return SoftAssociation(tps, mps, msgs, conv, iters, n_updates)


def enumerate_marginals(beta: np.ndarray) -> np.ndarray:
    """Exact p(a_l = m) by summing over every valid point-target association event.

    Exponential cost; intended as a reference for small problems.
    """
    n_t, m1 = beta.shape
    n_m = m1 - 1
    out = np.zeros((n_t, m1))
    total = 0.0
    for event in itertools.product(range(m1), repeat=n_t):
        used = [a for a in event if a > 0]
        if len(used) != len(set(used)):
            continue
        w = 1.0
        for l, a in enumerate(event):
            w *= beta[l, a]
        total += w
        for l, a in enumerate(event):
            out[l, a] += w
    return out / total if total > 0 else out


def count_association_events(n_targets: int, n_meas: int) -> int:
    return sum(
        1
        for ev in itertools.product(range(n_meas + 1), repeat=n_targets)
        if len([a for a in ev if a]) == len({a for a in ev if a})
    )


def hard_associations(soft: SoftAssociation) -> list[np.ndarray]:
    """MAP measurement-to-target labels per receiver (``CLUTTER`` = -1).

    Conflicts (two measurements claiming one target) are resolved greedily:
    the measurement with the larger pmf value keeps the target and the other
    falls back to its next best entry.
    """
    out = []
    for mp in soft.measurement_probs:
        n_m = mp.shape[0]
        labels = np.full(n_m, CLUTTER, dtype=int)
        if n_m == 0:
            out.append(labels)
            continue
        # candidate list sorted by pmf value, ties by measurement then option index
        cands = sorted(
            ((mp[m, j], m, j) for m in range(n_m) for j in range(mp.shape[1])),
            key=lambda c: (-c[0], c[1], c[2]),
        )
        done = np.zeros(n_m, bool)
        taken: set[int] = set()
        for _, m, j in cands:
            if done[m]:
                continue
            if j == 0:
                done[m] = True
                continue
            if (j - 1) in taken:
                continue
            labels[m] = j - 1
            taken.add(j - 1)
            done[m] = True
        out.append(labels)
    return out


def spatial_likelihood(positions, weights, rho: float, sigma: float, tx, rx) -> float:
    """Existence-normalised particle average of ``N(rho; h(x_p), sigma)``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    w = np.asarray(weights, float)
    tot = w.sum()
    if tot <= 0:
        return 0.0
    return float(kernels.likelihood_sums(positions, w, tx, rx, np.array([rho]), sigma)[0] / tot)


def spatial_likelihoods(positions, weights, rhos: Sequence[float], sigma: float, tx, rx) -> np.ndarray:
    w = np.asarray(weights, float)
    tot = w.sum()
    rhos = np.asarray(rhos, float)
    if tot <= 0 or rhos.size == 0:
        return np.zeros(rhos.size)
    return kernels.likelihood_sums(positions, w, tx, rx, rhos, sigma) / tot


__all__ = [
    "CLUTTER",
    "LikelihoodTable",
    "SoftAssociation",
    "association_marginals",
    "enumerate_marginals",
    "hard_associations",
    "spa_iterate",
    "spa_messages",
    "spatial_likelihood",
    "spatial_likelihoods",
]
