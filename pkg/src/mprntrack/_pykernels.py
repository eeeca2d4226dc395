"""Pure-Python/numpy implementations of the numerical kernels.

These mirror ``_ckernels.pyx`` one for one and are used when the compiled
extension is unavailable (or when ``MPRNTRACK_PURE_PYTHON`` is set).
"""

from __future__ import annotations

import math

import numpy as np

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_HALF_PI_GUARD = 0.5 * math.pi - 1e-9


def _ranges(pos, tx, rx):
    return np.sqrt(((pos - tx) ** 2).sum(axis=1)) + np.sqrt(((pos - rx) ** 2).sum(axis=1))


def likelihood_sums(pos, weights, tx, rx, rhos, sigma):
    """``out[m] = sum_p weights[p] * N(rhos[m]; h(pos[p]), sigma)``."""
    rhos = np.asarray(rhos, dtype=float)
    if rhos.size == 0:
        return np.zeros(0)
    h = _ranges(pos, tx, rx)
    z = (rhos[:, None] - h[None, :]) / sigma
    dens = np.exp(-0.5 * z * z) * (_INV_SQRT_2PI / sigma)
    return dens @ weights


def update_factors(pos, tx, rx, rhos, coeffs, sigma, base):
    """``out[p] = base + sum_m coeffs[m] * N(rhos[m]; h(pos[p]), sigma)``."""
    rhos = np.asarray(rhos, dtype=float)
    out = np.full(pos.shape[0], float(base))
    if rhos.size == 0:
        return out
    h = _ranges(pos, tx, rx)
    z = (rhos[:, None] - h[None, :]) / sigma
    dens = np.exp(-0.5 * z * z) * (_INV_SQRT_2PI / sigma)
    return out + np.asarray(coeffs, float) @ dens


def systematic_indices(weights, u0):
    """Systematic resampling indices for one uniform offset ``u0`` in [0, 1)."""
    w = np.asarray(weights, dtype=float)
    n = w.shape[0]
    c = np.cumsum(w)
    c /= c[-1]
    c[-1] = 1.0
    pts = (u0 + np.arange(n)) / n
    return np.minimum(np.searchsorted(c, pts, side="right"), n - 1).astype(np.int64)


def _position_and_jacobian(p, conv):
    # returns position (relative to the beam origin) and d position / d (R, az, el)
    R, az, el = p
    if conv == 0:
        a = math.tan(az)
        e = math.tan(el)
        D = math.sqrt(1.0 + a * a + e * e)
        D3 = D * D * D
        sa = 1.0 + a * a
        se = 1.0 + e * e
        pos = (R / D, R * a / D, R * e / D)
        jac = (
            (1.0 / D, -sa * R * a / D3, -se * R * e / D3),
            (a / D, sa * R * se / D3, -se * R * a * e / D3),
            (e / D, -sa * R * a * e / D3, se * R * sa / D3),
        )
    else:
        ca, sna = math.cos(az), math.sin(az)
        ce, sne = math.cos(el), math.sin(el)
        pos = (R * ce * ca, R * ce * sna, R * sne)
        jac = (
            (ce * ca, -R * ce * sna, -R * sne * ca),
            (ce * sna, R * ce * ca, -R * sne * sna),
            (sne, 0.0, R * ce),
        )
    return pos, jac


def _residuals(p, origin, tx, rx, rho, inv_w, conv, want_jac):
    pos, jac = _position_and_jacobian(p, conv)
    x0 = pos[0] + origin[0]
    x1 = pos[1] + origin[1]
    x2 = pos[2] + origin[2]
    dt0, dt1, dt2 = x0 - tx[0], x1 - tx[1], x2 - tx[2]
    nt = math.sqrt(dt0 * dt0 + dt1 * dt1 + dt2 * dt2)
    res = []
    rows = []
    for i in range(len(rho)):
        dr0, dr1, dr2 = x0 - rx[i][0], x1 - rx[i][1], x2 - rx[i][2]
        nr = math.sqrt(dr0 * dr0 + dr1 * dr1 + dr2 * dr2)
        res.append((rho[i] - nt - nr) * inv_w[i])
        if want_jac:
            it = 1.0 / nt if nt > 0 else 0.0
            ir = 1.0 / nr if nr > 0 else 0.0
            g0 = -(dt0 * it + dr0 * ir) * inv_w[i]
            g1 = -(dt1 * it + dr1 * ir) * inv_w[i]
            g2 = -(dt2 * it + dr2 * ir) * inv_w[i]
            rows.append(
                [g0 * jac[0][k] + g1 * jac[1][k] + g2 * jac[2][k] for k in range(3)]
            )
    return res, rows


def _solve_small(A, b):
    # Gaussian elimination with partial pivoting on a k x k system, k <= 3
    k = len(b)
    M = [list(A[i]) + [b[i]] for i in range(k)]
    for c in range(k):
        piv = max(range(c, k), key=lambda r: abs(M[r][c]))
        if M[piv][c] == 0.0:
            return None
        M[c], M[piv] = M[piv], M[c]
        for r in range(c + 1, k):
            f = M[r][c] / M[c][c]
            for j in range(c, k + 1):
                M[r][j] -= f * M[c][j]
    x = [0.0] * k
    for r in range(k - 1, -1, -1):
        s = M[r][k]
        for j in range(r + 1, k):
            s -= M[r][j] * x[j]
        x[r] = s / M[r][r]
    return x


def _clamp_domain(p, conv):
    p[0] = max(p[0], 0.0)
    if conv == 0:
        p[1] = min(max(p[1], -_HALF_PI_GUARD), _HALF_PI_GUARD)
    p[2] = min(max(p[2], -_HALF_PI_GUARD), _HALF_PI_GUARD)


def lm_solve(origin, tx, rx, rho, inv_w, p0, free, conv, max_iter, tol):
    """Levenberg-Marquardt over the free subset of (range, azimuth, elevation).

    Fixed coordinates stay at their ``p0`` values.  Returns
    ``(params, cost, converged, n_iter)`` where ``cost`` is the sum of squared
    weighted residuals.
    """
    origin = [float(v) for v in origin]
    tx = [float(v) for v in tx]
    rx = [[float(v) for v in r] for r in np.asarray(rx, float)]
    rho = [float(v) for v in rho]
    inv_w = [float(v) for v in inv_w]
    p = [float(v) for v in p0]
    idx = [k for k in range(3) if free[k]]
    _clamp_domain(p, conv)
    res, rows = _residuals(p, origin, tx, rx, rho, inv_w, conv, True)
    cost = sum(r * r for r in res)
    if not idx:
        return np.array(p), cost, True, 0
    mu = 1e-3
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        n = len(idx)
        A = [[sum(rows[i][idx[a]] * rows[i][idx[b]] for i in range(len(res))) for b in range(n)] for a in range(n)]
        g = [sum(rows[i][idx[a]] * res[i] for i in range(len(res))) for a in range(n)]
        if cost <= 1e-28 or all(v == 0.0 for v in g):
            converged = True
            break
        improved = False
        while mu < 1e16:
            Ad = [row[:] for row in A]
            for a in range(n):
                Ad[a][a] += mu * (A[a][a] if A[a][a] > 0 else 1.0)
            step = _solve_small(Ad, [-v for v in g])
            if step is None:
                mu *= 10.0
                continue
            q = p[:]
            for a, k in enumerate(idx):
                q[k] += step[a]
            _clamp_domain(q, conv)
            res_q, rows_q = _residuals(q, origin, tx, rx, rho, inv_w, conv, True)
            cost_q = sum(r * r for r in res_q)
            if cost_q <= cost:
                small = all(abs(q[k] - p[k]) <= tol * (abs(p[k]) + tol) for k in idx)
                rel_drop = cost - cost_q <= 1e-15 * cost
                p, res, rows, cost = q, res_q, rows_q, cost_q
                mu = max(mu / 3.0, 1e-12)
                improved = True
                if small or rel_drop:
                    converged = True
                break
            mu *= 4.0
        if not improved:
            # no descent direction left at this damping: stationary to machine precision
            converged = True
            break
        if converged:
            break
    return np.array(p), cost, converged, it
