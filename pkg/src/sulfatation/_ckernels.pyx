# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow, isfinite

cnp.import_array()

NAME = "cython"


cdef inline void _eta(double a, double b, double p, double q, double bb,
                      double* val, double* da, double* db) noexcept nogil:
    cdef double gap, ap, gq
    if a < 0.0 or b < 0.0:
        val[0] = 0.0
        da[0] = 0.0
        db[0] = 0.0
        return
    gap = bb - b
    if gap < 0.0:
        gap = 0.0
    ap = pow(a, p)
    gq = pow(gap, q)
    val[0] = ap * gq
    da[0] = p * pow(a, p - 1.0) * gq
    if b <= bb:
        db[0] = -q * ap * pow(gap, q - 1.0)
    else:
        db[0] = 0.0


def cell_rhs(const double[::1] u1, const double[:, ::1] u2, const double[:, ::1] u3,
             const double[::1] u4, const double[::1] P,
             double[:, ::1] r2, double[:, ::1] r3, double[::1] r4):
    cdef Py_ssize_t n = u2.shape[0], ny = u2.shape[1], i, j, last = ny - 1
    cdef double d2 = P[0], d3 = P[1], be2 = P[2], be3 = P[3], be4 = P[4]
    cdef double B = P[5], H = P[6], pk2 = P[7], pk3 = P[8], pk4 = P[9]
    cdef double gam = P[10], bb = P[11], p = P[12], q = P[13], hy = P[14]
    cdef double c2 = d2 / (hy * hy), c3 = d3 / (hy * hy)
    cdef double src, rate, da, db
    with nogil:
        for i in range(n):
            r2[i, 0] = 2.0 * c2 * (u2[i, 1] - u2[i, 0])
            r3[i, 0] = 2.0 * c3 * (u3[i, 1] - u3[i, 0])
            for j in range(1, last):
                r2[i, j] = c2 * (u2[i, j - 1] - 2.0 * u2[i, j] + u2[i, j + 1])
                r3[i, j] = c3 * (u3[i, j - 1] - 2.0 * u3[i, j] + u3[i, j + 1])
            r2[i, last] = 2.0 * c2 * (u2[i, last - 1] - u2[i, last])
            r3[i, last] = 2.0 * c3 * (u3[i, last - 1] - u3[i, last])
            for j in range(ny):
                src = -pk2 * u2[i, j] + pk3 * u3[i, j]
                r2[i, j] += src / be2
                r3[i, j] += -src / be3
            r2[i, 0] += (2.0 / hy) * (B * (H * u1[i] - u2[i, 0]))
            _eta(u3[i, last], u4[i], p, q, bb, &rate, &da, &db)
            r3[i, last] -= (2.0 / hy) * gam * rate
            r4[i] = (pk4 / be4) * rate


def eta_partials(const double[::1] u3_last, const double[::1] u4, const double[::1] P):
    cdef Py_ssize_t n = u3_last.shape[0], i
    val = np.empty(n)
    da = np.empty(n)
    db = np.empty(n)
    cdef double[::1] v = val, a = da, b = db
    cdef double p = P[12], q = P[13], bb = P[11]
    with nogil:
        for i in range(n):
            _eta(u3_last[i], u4[i], p, q, bb, &v[i], &a[i], &b[i])
    return val, da, db


def arrow_solve(double s, const double[::1] P, const double[::1] Q,
                const double[::1] eta_a, const double[::1] eta_b,
                const double[::1] b1, const double[:, ::1] b2, const double[:, ::1] b3,
                const double[::1] b4,
                double[::1] x1, double[:, ::1] x2, double[:, ::1] x3, double[::1] x4):
    cdef Py_ssize_t n = b2.shape[0], ny = b2.shape[1], i, j
    cdef double d2 = P[0], d3 = P[1], be2 = P[2], be3 = P[3], be4 = P[4]
    cdef double B = P[5], H = P[6], pk2 = P[7], pk3 = P[8], pk4 = P[9]
    cdef double gam = P[10], hy = P[14]
    cdef double d1 = Q[0], hx = Q[1]
    cdef double c2 = s * d2 / (hy * hy), c3 = s * d3 / (hy * hy), kap = pk4 / be4
    cdef double diag2 = 1.0 + 2.0 * c2 + s * pk2 / be2
    cdef double diag3 = 1.0 + 2.0 * c3 + s * pk3 / be3
    cdef double off23 = -s * pk3 / be2, off32 = -s * pk2 / be3
    cdef double coup = s * 2.0 * B * H / hy
    cdef double cx = s * d1 / (hx * hx)
    cdef double t4, e34, a11, a12, a21, a22, r1, r2, det, i11, i12, i21, i22
    cdef double low2, low3, up2, up3, z2, z3, w, bsub, lower

    g_arr = np.empty((n, ny, 2))
    hm_arr = np.empty((n, ny, 4))
    alpha_arr = np.empty(n)
    beta_arr = np.empty(n)
    gam3_arr = np.empty(n)
    del3_arr = np.empty(n)
    dg_arr = np.empty(n)
    rh_arr = np.empty(n)
    cdef double[:, :, ::1] g = g_arr
    cdef double[:, :, ::1] hm = hm_arr
    cdef double[::1] alpha = alpha_arr, beta = beta_arr, gam3 = gam3_arr, del3 = del3_arr
    cdef double[::1] dg = dg_arr, rh = rh_arr
    cdef bint singular = 0

    with nogil:
        for i in range(n):
            t4 = 1.0 - s * kap * eta_b[i]
            e34 = 2.0 * s * gam * eta_b[i] / hy
            a11 = diag2
            a12 = off23
            a21 = off32
            a22 = diag3 + 2.0 * s * gam * eta_a[i] / hy + e34 * s * kap * eta_a[i] / t4
            r1 = b2[i, ny - 1]
            r2 = b3[i, ny - 1] - e34 * b4[i] / t4
            j = ny - 1
            while True:
                if j == 0:
                    a11 = a11 + 2.0 * s * B / hy
                det = a11 * a22 - a12 * a21
                if det == 0.0 or not isfinite(det):
                    singular = 1
                    break
                i11 = a22 / det
                i12 = -a12 / det
                i21 = -a21 / det
                i22 = a11 / det
                g[i, j, 0] = i11 * r1 + i12 * r2
                g[i, j, 1] = i21 * r1 + i22 * r2
                if j == 0:
                    break
                low2 = -(2.0 if j == ny - 1 else 1.0) * c2
                low3 = -(2.0 if j == ny - 1 else 1.0) * c3
                hm[i, j, 0] = i11 * low2
                hm[i, j, 1] = i12 * low3
                hm[i, j, 2] = i21 * low2
                hm[i, j, 3] = i22 * low3
                up2 = -(2.0 if j - 1 == 0 else 1.0) * c2
                up3 = -(2.0 if j - 1 == 0 else 1.0) * c3
                a11 = diag2 - up2 * hm[i, j, 0]
                a12 = off23 - up2 * hm[i, j, 1]
                a21 = off32 - up3 * hm[i, j, 2]
                a22 = diag3 - up3 * hm[i, j, 3]
                r1 = b2[i, j - 1] - up2 * g[i, j, 0]
                r2 = b3[i, j - 1] - up3 * g[i, j, 1]
                j -= 1
            if singular:
                break
            alpha[i] = g[i, 0, 0]
            beta[i] = i11 * coup
            gam3[i] = g[i, 0, 1]
            del3[i] = i21 * coup

        if not singular:
            # Thomas on the Schur complement; row 0 is the held Dirichlet value
            dg[0] = 1.0
            rh[0] = b1[0]
            for i in range(1, n):
                lower = -2.0 * cx if i == n - 1 else -cx
                w = lower / dg[i - 1]
                bsub = 0.0 if i == 1 else -cx
                dg[i] = 1.0 + 2.0 * cx + s * B * H - s * B * beta[i] - w * bsub
                rh[i] = b1[i] + s * B * alpha[i] - w * rh[i - 1]
                if dg[i] == 0.0:
                    singular = 1
                    break

        if not singular:
            x1[n - 1] = rh[n - 1] / dg[n - 1]
            for i in range(n - 2, 0, -1):
                x1[i] = (rh[i] + cx * x1[i + 1]) / dg[i]
            x1[0] = rh[0]
            for i in range(n):
                z2 = alpha[i] + beta[i] * x1[i]
                z3 = gam3[i] + del3[i] * x1[i]
                x2[i, 0] = z2
                x3[i, 0] = z3
                for j in range(1, ny):
                    w = g[i, j, 0] - hm[i, j, 0] * z2 - hm[i, j, 1] * z3
                    z3 = g[i, j, 1] - hm[i, j, 2] * z2 - hm[i, j, 3] * z3
                    z2 = w
                    x2[i, j] = z2
                    x3[i, j] = z3
                x4[i] = (b4[i] + s * kap * eta_a[i] * x3[i, ny - 1]) / (1.0 - s * kap * eta_b[i])

    if singular:
        raise np.linalg.LinAlgError("singular block in structured solve")
