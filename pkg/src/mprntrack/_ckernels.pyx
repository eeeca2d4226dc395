# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels.  Semantics match ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, tan, cos, sin, fabs, M_PI

cnp.import_array()

cdef double INV_SQRT_2PI = 0.3989422804014327
cdef double HALF_PI_GUARD = 0.5 * M_PI - 1e-9


cdef inline double _range(const double[:, ::1] pos, Py_ssize_t p,
                          double t0, double t1, double t2,
                          double r0, double r1, double r2) nogil:
    cdef double a0 = pos[p, 0] - t0, a1 = pos[p, 1] - t1, a2 = pos[p, 2] - t2
    cdef double b0 = pos[p, 0] - r0, b1 = pos[p, 1] - r1, b2 = pos[p, 2] - r2
    return sqrt(a0 * a0 + a1 * a1 + a2 * a2) + sqrt(b0 * b0 + b1 * b1 + b2 * b2)


def likelihood_sums(pos, weights, tx, rx, rhos, double sigma):
    cdef const double[:, ::1] P = np.ascontiguousarray(pos, dtype=np.float64)
    cdef const double[::1] W = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[::1] R = np.ascontiguousarray(rhos, dtype=np.float64).reshape(-1)
    cdef double t0 = tx[0], t1 = tx[1], t2 = tx[2]
    cdef double r0 = rx[0], r1 = rx[1], r2 = rx[2]
    cdef Py_ssize_t n = P.shape[0], m = R.shape[0], i, j
    out = np.zeros(m)
    cdef double[::1] O = out
    cdef double h, z, inv = 1.0 / sigma, norm = INV_SQRT_2PI / sigma
    with nogil:
        for i in range(n):
            if W[i] == 0.0:
                continue
            h = _range(P, i, t0, t1, t2, r0, r1, r2)
            for j in range(m):
                z = (R[j] - h) * inv
                O[j] += W[i] * exp(-0.5 * z * z) * norm
    return out


def update_factors(pos, tx, rx, rhos, coeffs, double sigma, double base):
    cdef const double[:, ::1] P = np.ascontiguousarray(pos, dtype=np.float64)
    cdef const double[::1] R = np.ascontiguousarray(rhos, dtype=np.float64).reshape(-1)
    cdef const double[::1] C = np.ascontiguousarray(coeffs, dtype=np.float64).reshape(-1)
    cdef double t0 = tx[0], t1 = tx[1], t2 = tx[2]
    cdef double r0 = rx[0], r1 = rx[1], r2 = rx[2]
    cdef Py_ssize_t n = P.shape[0], m = R.shape[0], i, j
    out = np.empty(n)
    cdef double[::1] O = out
    cdef double h, z, acc, inv = 1.0 / sigma, norm = INV_SQRT_2PI / sigma
    with nogil:
        for i in range(n):
            acc = 0.0
            if m > 0:
                h = _range(P, i, t0, t1, t2, r0, r1, r2)
                for j in range(m):
                    z = (R[j] - h) * inv
                    acc += C[j] * exp(-0.5 * z * z) * norm
            O[i] = base + acc
    return out


def systematic_indices(weights, double u0):
    cdef const double[::1] W = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = W.shape[0], i, j = 0
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] O = out
    c_np = np.cumsum(W)
    c_np /= c_np[n - 1]
    c_np[n - 1] = 1.0
    cdef double[::1] c = c_np
    cdef double pt
    with nogil:
        for i in range(n):
            pt = (u0 + i) / n
            while j < n - 1 and c[j] <= pt:
                j += 1
            O[i] = j
    return out


cdef void _pos_jac(double* p, int conv, double* pos, double* jac) nogil:
    # jac is row-major 3x3: jac[3*row + col] = d pos[row] / d p[col]
    cdef double R = p[0], a, e, D, D3, sa, se, ca, sna, ce, sne
    if conv == 0:
        a = tan(p[1])
        e = tan(p[2])
        D = sqrt(1.0 + a * a + e * e)
        D3 = D * D * D
        sa = 1.0 + a * a
        se = 1.0 + e * e
        pos[0] = R / D
        pos[1] = R * a / D
        pos[2] = R * e / D
        jac[0] = 1.0 / D
        jac[1] = -sa * R * a / D3
        jac[2] = -se * R * e / D3
        jac[3] = a / D
        jac[4] = sa * R * se / D3
        jac[5] = -se * R * a * e / D3
        jac[6] = e / D
        jac[7] = -sa * R * a * e / D3
        jac[8] = se * R * sa / D3
    else:
        ca = cos(p[1])
        sna = sin(p[1])
        ce = cos(p[2])
        sne = sin(p[2])
        pos[0] = R * ce * ca
        pos[1] = R * ce * sna
        pos[2] = R * sne
        jac[0] = ce * ca
        jac[1] = -R * ce * sna
        jac[2] = -R * sne * ca
        jac[3] = ce * sna
        jac[4] = R * ce * ca
        jac[5] = -R * sne * sna
        jac[6] = sne
        jac[7] = 0.0
        jac[8] = R * ce


cdef double _residuals(double* p, double* origin, double* tx, const double[:, ::1] rx,
                       const double[::1] rho, const double[::1] inv_w, int conv,
                       double* res, double* rows) nogil:
    cdef double pos[3]
    cdef double jac[9]
    cdef double x0, x1, x2, dt0, dt1, dt2, nt, dr0, dr1, dr2, nr, it, ir, g0, g1, g2, cost = 0.0
    cdef Py_ssize_t i, k, s = rho.shape[0]
    _pos_jac(p, conv, pos, jac)
    x0 = pos[0] + origin[0]
    x1 = pos[1] + origin[1]
    x2 = pos[2] + origin[2]
    dt0 = x0 - tx[0]
    dt1 = x1 - tx[1]
    dt2 = x2 - tx[2]
    nt = sqrt(dt0 * dt0 + dt1 * dt1 + dt2 * dt2)
    for i in range(s):
        dr0 = x0 - rx[i, 0]
        dr1 = x1 - rx[i, 1]
        dr2 = x2 - rx[i, 2]
        nr = sqrt(dr0 * dr0 + dr1 * dr1 + dr2 * dr2)
        res[i] = (rho[i] - nt - nr) * inv_w[i]
        cost += res[i] * res[i]
        it = 1.0 / nt if nt > 0 else 0.0
        ir = 1.0 / nr if nr > 0 else 0.0
        g0 = -(dt0 * it + dr0 * ir) * inv_w[i]
        g1 = -(dt1 * it + dr1 * ir) * inv_w[i]
        g2 = -(dt2 * it + dr2 * ir) * inv_w[i]
        for k in range(3):
            rows[3 * i + k] = g0 * jac[k] + g1 * jac[3 + k] + g2 * jac[6 + k]
    return cost


cdef void _clamp(double* p, int conv) nogil:
    if p[0] < 0.0:
        p[0] = 0.0
    if conv == 0:
        if p[1] < -HALF_PI_GUARD:
            p[1] = -HALF_PI_GUARD
        elif p[1] > HALF_PI_GUARD:
            p[1] = HALF_PI_GUARD
    if p[2] < -HALF_PI_GUARD:
        p[2] = -HALF_PI_GUARD
    elif p[2] > HALF_PI_GUARD:
        p[2] = HALF_PI_GUARD


cdef int _solve(double* A, double* b, int n, double* x) nogil:
    # in-place Gaussian elimination with partial pivoting, A is n x n row-major (stride 3)
    cdef int c, r, j, piv
    cdef double f, tmp, s
    for c in range(n):
        piv = c
        for r in range(c + 1, n):
            if fabs(A[3 * r + c]) > fabs(A[3 * piv + c]):
                piv = r
        if A[3 * piv + c] == 0.0:
            return 0
        if piv != c:
            for j in range(n):
                tmp = A[3 * c + j]
                A[3 * c + j] = A[3 * piv + j]
                A[3 * piv + j] = tmp
            tmp = b[c]
            b[c] = b[piv]
            b[piv] = tmp
        for r in range(c + 1, n):
            f = A[3 * r + c] / A[3 * c + c]
            for j in range(c, n):
                A[3 * r + j] -= f * A[3 * c + j]
            b[r] -= f * b[c]
    for r in range(n - 1, -1, -1):
        s = b[r]
        for j in range(r + 1, n):
            s -= A[3 * r + j] * x[j]
        x[r] = s / A[3 * r + r]
    return 1


def lm_solve(origin, tx, rx, rho, inv_w, p0, free, int conv, int max_iter, double tol):
    cdef const double[:, ::1] RX = np.ascontiguousarray(rx, dtype=np.float64).reshape(-1, 3)
    cdef const double[::1] RHO = np.ascontiguousarray(rho, dtype=np.float64).reshape(-1)
    cdef const double[::1] IW = np.ascontiguousarray(inv_w, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t s = RHO.shape[0]
    cdef double o[3]
    cdef double t[3]
    cdef double p[3]
    cdef double q[3]
    cdef int idx[3]
    cdef int n = 0, a, b, k, it = 0, improved, converged = 0, small
    for k in range(3):
        o[k] = origin[k]
        t[k] = tx[k]
        p[k] = p0[k]
        if free[k]:
            idx[n] = k
            n += 1
    res_np = np.empty(max(s, 1))
    rows_np = np.empty(3 * max(s, 1))
    res_q_np = np.empty(max(s, 1))
    rows_q_np = np.empty(3 * max(s, 1))
    cdef double[::1] res = res_np, rows = rows_np, res_q = res_q_np, rows_q = rows_q_np
    cdef double A[9]
    cdef double Ad[9]
    cdef double g[3]
    cdef double rhs[3]
    cdef double step[3]
    cdef double cost, cost_q, mu = 1e-3, acc
    cdef Py_ssize_t i
    _clamp(p, conv)
    cost = _residuals(p, o, t, RX, RHO, IW, conv, &res[0], &rows[0])
    if n == 0:
        return np.array([p[0], p[1], p[2]]), cost, True, 0
    with nogil:
        while it < max_iter:
            it += 1
            for a in range(n):
                acc = 0.0
                for i in range(s):
                    acc += rows[3 * i + idx[a]] * res[i]
                g[a] = acc
                for b in range(n):
                    acc = 0.0
                    for i in range(s):
                        acc += rows[3 * i + idx[a]] * rows[3 * i + idx[b]]
                    A[3 * a + b] = acc
            if cost <= 1e-28:
                converged = 1
                break
            k = 1
            for a in range(n):
                if g[a] != 0.0:
                    k = 0
            if k:
                converged = 1
                break
            improved = 0
            while mu < 1e16:
                for a in range(n):
                    for b in range(n):
                        Ad[3 * a + b] = A[3 * a + b]
                    Ad[3 * a + a] += mu * (A[3 * a + a] if A[3 * a + a] > 0 else 1.0)
                    rhs[a] = -g[a]
                if not _solve(Ad, rhs, n, step):
                    mu *= 10.0
                    continue
                for k in range(3):
                    q[k] = p[k]
                for a in range(n):
                    q[idx[a]] += step[a]
                _clamp(q, conv)
                cost_q = _residuals(q, o, t, RX, RHO, IW, conv, &res_q[0], &rows_q[0])
                if cost_q <= cost:
                    small = 1
                    for a in range(n):
                        k = idx[a]
                        if fabs(q[k] - p[k]) > tol * (fabs(p[k]) + tol):
                            small = 0
                    if cost - cost_q <= 1e-15 * cost:
                        small = 1
                    for k in range(3):
                        p[k] = q[k]
                    for i in range(s):
                        res[i] = res_q[i]
                    for i in range(3 * s):
                        rows[i] = rows_q[i]
                    cost = cost_q
                    mu = mu / 3.0
                    if mu < 1e-12:
                        mu = 1e-12
                    improved = 1
                    if small:
                        converged = 1
                    break
                mu *= 4.0
            if not improved:
                converged = 1
                break
            if converged:
                break
    return np.array([p[0], p[1], p[2]]), cost, bool(converged), it
