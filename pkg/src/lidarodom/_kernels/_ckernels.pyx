# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; see ``_pykernels`` for the contracts."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

cdef enum:
    MAXW = 64


cdef inline void _insertion_sort(double* a, int n) noexcept nogil:
    cdef int i, j
    cdef double v
    for i in range(1, n):
        v = a[i]
        j = i - 1
        while j >= 0 and a[j] > v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = v


def scan_smoothness(points, ring_offsets, int half_width, bint literal=False, double disc_ratio=1.5):
    cdef const double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef const cnp.int64_t[::1] off = np.ascontiguousarray(ring_offsets, dtype=np.int64)
    cdef Py_ssize_t n_pts = P.shape[0]
    sigma_arr = np.zeros(n_pts)
    valid_arr = np.zeros(n_pts, dtype=np.uint8)
    edge_arr = np.zeros(n_pts, dtype=np.uint8)
    cdef double[::1] sigma = sigma_arr
    cdef unsigned char[::1] valid = valid_arr
    cdef unsigned char[::1] edge_ok = edge_arr
    cdef int w = half_width
    cdef int count = 2 * w
    if count > MAXW:
        raise ValueError("half_width too large")
    cdef double buf[MAXW]
    cdef Py_ssize_t m, a, b, i, k
    cdef int j
    cdef double ax, ay, az, dx, dy, dz, med
    with nogil:
        for m in range(off.shape[0] - 1):
            a = off[m]
            b = off[m + 1]
            if b - a < 2 * w + 1:
                continue
            for i in range(a + w, b - w):
                ax = 0.0
                ay = 0.0
                az = 0.0
                for j in range(-w, w + 1):
                    if j == 0:
                        continue
                    dx = P[i + j, 0] - P[i, 0]
                    dy = P[i + j, 1] - P[i, 1]
                    dz = P[i + j, 2] - P[i, 2]
                    if literal:
                        ax = ax + sqrt(dx * dx + dy * dy + dz * dz)
                    else:
                        ax = ax + dx
                        ay = ay + dy
                        az = az + dz
                if literal:
                    sigma[i] = ax / count
                else:
                    sigma[i] = sqrt(ax * ax + ay * ay + az * az) / count
                valid[i] = 1
                for k in range(count):
                    dx = P[i - w + k + 1, 0] - P[i - w + k, 0]
                    dy = P[i - w + k + 1, 1] - P[i - w + k, 1]
                    dz = P[i - w + k + 1, 2] - P[i - w + k, 2]
                    buf[k] = sqrt(dx * dx + dy * dy + dz * dz)
                _insertion_sort(buf, count)
                med = 0.5 * (buf[w - 1] + buf[w])
                edge_ok[i] = buf[count - 1] <= disc_ratio * med
    return sigma_arr, valid_arr.astype(bool), edge_arr.astype(bool)


cdef Py_ssize_t _pick(double[::1] sigma, unsigned char[::1] cand, unsigned char[::1] sup,
                      cnp.int64_t[::1] sector_of, Py_ssize_t sa, Py_ssize_t sb, Py_ssize_t a, Py_ssize_t b,
                      int sector, int cap, int w, bint want_max, cnp.int64_t* out,
                      Py_ssize_t n_out) noexcept nogil:
    cdef int taken = 0
    cdef Py_ssize_t i, best, lo, hi, k
    cdef double bv
    while taken < cap:
        best = -1
        bv = 0.0
        for i in range(sa, sb):
            if not cand[i] or sup[i] or sector_of[i] != sector:
                continue
            if best < 0 or (want_max and sigma[i] > bv) or (not want_max and sigma[i] < bv):
                best = i
                bv = sigma[i]
        if best < 0:
            break
        out[n_out] = best
        n_out += 1
        taken += 1
        lo = best - w
        if lo < a:
            lo = a
        hi = best + w + 1
        if hi > b:
            hi = b
        for k in range(lo, hi):
            sup[k] = 1
    return n_out


def select_features(sigma_in, valid_in, edge_ok_in, azimuth, ring_offsets, int sectors, int max_edges,
                    int max_planars, double edge_min, double planar_max, int half_width, bint suppress=True):
    cdef double[::1] sigma = np.ascontiguousarray(sigma_in, dtype=np.float64)
    cdef const cnp.int64_t[::1] off = np.ascontiguousarray(ring_offsets, dtype=np.int64)
    cdef Py_ssize_t n_pts = sigma.shape[0]
    valid = np.asarray(valid_in, dtype=bool)
    e_c = np.ascontiguousarray(valid & np.asarray(edge_ok_in, dtype=bool) & (np.asarray(sigma_in) >= edge_min),
                               dtype=np.uint8)
    p_c = np.ascontiguousarray(valid & (np.asarray(sigma_in) <= planar_max), dtype=np.uint8)
    cdef unsigned char[::1] e_cand = e_c
    cdef unsigned char[::1] p_cand = p_c
    sec = np.minimum((np.asarray(azimuth, dtype=np.float64) * sectors).astype(np.int64), sectors - 1)
    cdef cnp.int64_t[::1] sector_of = np.ascontiguousarray(sec)
    sup_e_arr = np.zeros(n_pts, dtype=np.uint8)
    sup_p_arr = np.zeros(n_pts, dtype=np.uint8)
    cdef unsigned char[::1] sup_e = sup_e_arr
    cdef unsigned char[::1] sup_p = sup_p_arr
    cdef int n_rings = off.shape[0] - 1
    e_out_arr = np.zeros(max(n_rings * sectors * max(max_edges, 0), 1), dtype=np.int64)
    p_out_arr = np.zeros(max(n_rings * sectors * max(max_planars, 0), 1), dtype=np.int64)
    cdef cnp.int64_t[::1] e_out = e_out_arr
    cdef cnp.int64_t[::1] p_out = p_out_arr
    cdef Py_ssize_t ne = 0, np_ = 0, m, a, b, i
    cdef int s
    first_arr = np.zeros(max(sectors, 1), dtype=np.int64)
    last_arr = np.zeros(max(sectors, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] first = first_arr
    cdef cnp.int64_t[::1] last = last_arr
    cdef int w = half_width if suppress else 0
    with nogil:
        for m in range(n_rings):
            a = off[m]
            b = off[m + 1]
            if b == a:
                continue
            # index span of each sector; rings are azimuth-ordered so spans are tight
            for s in range(sectors):
                first[s] = b
                last[s] = a
            for i in range(a, b):
                s = <int>sector_of[i]
                if i < first[s]:
                    first[s] = i
                if i + 1 > last[s]:
                    last[s] = i + 1
            for s in range(sectors):
                if first[s] >= last[s]:
                    continue
                if max_edges > 0:
                    ne = _pick(sigma, e_cand, sup_e, sector_of, first[s], last[s], a, b, s,
                               max_edges, w, True, &e_out[0], ne)
                if max_planars > 0:
                    np_ = _pick(sigma, p_cand, sup_p, sector_of, first[s], last[s], a, b, s,
                                max_planars, w, False, &p_out[0], np_)
    return np.sort(e_out_arr[:ne]), np.sort(p_out_arr[:np_])


def normal_equations(points, R, t, centers, dirs, kinds, weights, double huber_delta=0.0):
    cdef const double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] Rm = np.ascontiguousarray(R, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[:, ::1] C = np.ascontiguousarray(centers, dtype=np.float64)
    cdef const double[:, ::1] D = np.ascontiguousarray(dirs, dtype=np.float64)
    cdef const cnp.int64_t[::1] K = np.ascontiguousarray(kinds, dtype=np.int64)
    cdef const double[::1] W = np.ascontiguousarray(weights, dtype=np.float64)
    H_arr = np.zeros((6, 6))
    g_arr = np.zeros(6)
    cdef double[:, ::1] H = H_arr
    cdef double[::1] g = g_arr
    cdef double cost = 0.0
    cdef Py_ssize_t i, r_, c_
    cdef double qx, qy, qz, dx, dy, dz, xx, xy, xz, f, gx, gy, gz, scale, rho, af, res
    cdef double row[6]
    with nogil:
        for i in range(P.shape[0]):
            qx = Rm[0, 0] * P[i, 0] + Rm[0, 1] * P[i, 1] + Rm[0, 2] * P[i, 2] + tv[0]
            qy = Rm[1, 0] * P[i, 0] + Rm[1, 1] * P[i, 1] + Rm[1, 2] * P[i, 2] + tv[1]
            qz = Rm[2, 0] * P[i, 0] + Rm[2, 1] * P[i, 1] + Rm[2, 2] * P[i, 2] + tv[2]
            dx = qx - C[i, 0]
            dy = qy - C[i, 1]
            dz = qz - C[i, 2]
            if K[i] == 0:
                xx = dy * D[i, 2] - dz * D[i, 1]
                xy = dz * D[i, 0] - dx * D[i, 2]
                xz = dx * D[i, 1] - dy * D[i, 0]
                f = sqrt(xx * xx + xy * xy + xz * xz)
                if f < 1e-12:
                    gx = 0.0
                    gy = 0.0
                    gz = 0.0
                else:
                    xx = xx / f
                    xy = xy / f
                    xz = xz / f
                    gx = D[i, 1] * xz - D[i, 2] * xy
                    gy = D[i, 2] * xx - D[i, 0] * xz
                    gz = D[i, 0] * xy - D[i, 1] * xx
            else:
                f = dx * D[i, 0] + dy * D[i, 1] + dz * D[i, 2]
                gx = D[i, 0]
                gy = D[i, 1]
                gz = D[i, 2]
            scale = W[i]
            af = fabs(f)
            if huber_delta > 0.0 and af > huber_delta:
                scale = scale * sqrt(huber_delta / af)
                rho = 2.0 * huber_delta * af - huber_delta * huber_delta
            else:
                rho = f * f
            cost += 0.5 * W[i] * W[i] * rho
            row[0] = scale * gx
            row[1] = scale * gy
            row[2] = scale * gz
            row[3] = scale * (qy * gz - qz * gy)
            row[4] = scale * (qz * gx - qx * gz)
            row[5] = scale * (qx * gy - qy * gx)
            res = scale * f
            for r_ in range(6):
                g[r_] += row[r_] * res
                for c_ in range(6):
                    H[r_, c_] += row[r_] * row[c_]
    return H_arr, g_arr, cost


cdef void _jacobi3(double* a, double* v) noexcept nogil:
    """Diagonalise the symmetric 3x3 ``a`` (row-major) in place; eigenvectors go to the columns of ``v``."""
    cdef int sweep, p, q, r, k
    cdef double off, theta, t, c, s, apq, akp, akq, vkp, vkq
    for k in range(9):
        v[k] = 0.0
    v[0] = v[4] = v[8] = 1.0
    for sweep in range(50):
        off = a[1] * a[1] + a[2] * a[2] + a[5] * a[5]
        if off <= 1e-30 * (a[0] * a[0] + a[4] * a[4] + a[8] * a[8]) or off == 0.0:
            return
        for p in range(2):
            for q in range(p + 1, 3):
                apq = a[3 * p + q]
                if apq == 0.0:
                    continue
                theta = (a[3 * q + q] - a[3 * p + p]) / (2.0 * apq)
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                r = 3 - p - q
                akp = a[3 * r + p]
                akq = a[3 * r + q]
                a[3 * r + p] = a[3 * p + r] = c * akp - s * akq
                a[3 * r + q] = a[3 * q + r] = s * akp + c * akq
                a[3 * p + p] -= t * apq
                a[3 * q + q] += t * apq
                a[3 * p + q] = a[3 * q + p] = 0.0
                for k in range(3):
                    vkp = v[3 * k + p]
                    vkq = v[3 * k + q]
                    v[3 * k + p] = c * vkp - s * vkq
                    v[3 * k + q] = s * vkp + c * vkq


def covariance_eigen(groups):
    cdef const double[:, :, ::1] G = np.ascontiguousarray(groups, dtype=np.float64)
    cdef Py_ssize_t n = G.shape[0], k = G.shape[1], i, j, a, b, col
    center_arr = np.zeros((n, 3))
    vals_arr = np.zeros((n, 3))
    vecs_arr = np.zeros((n, 3, 3))
    cdef double[:, ::1] center = center_arr
    cdef double[:, ::1] vals = vals_arr
    cdef double[:, :, ::1] vecs = vecs_arr
    cdef double m[3]
    cdef double d[3]
    cdef double A[9]
    cdef double V[9]
    cdef double ev[3]
    cdef int order[3]
    cdef int tmp
    if n == 0 or k == 0:
        return center_arr, vals_arr, vecs_arr
    with nogil:
        for i in range(n):
            m[0] = m[1] = m[2] = 0.0
            for j in range(k):
                m[0] += G[i, j, 0]
                m[1] += G[i, j, 1]
                m[2] += G[i, j, 2]
            m[0] /= k
            m[1] /= k
            m[2] /= k
            for a in range(9):
                A[a] = 0.0
            for j in range(k):
                d[0] = G[i, j, 0] - m[0]
                d[1] = G[i, j, 1] - m[1]
                d[2] = G[i, j, 2] - m[2]
                for a in range(3):
                    for b in range(a, 3):
                        A[3 * a + b] += d[a] * d[b]
            for a in range(3):
                for b in range(a, 3):
                    A[3 * a + b] /= k
                    A[3 * b + a] = A[3 * a + b]
            _jacobi3(A, V)
            ev[0] = A[0]
            ev[1] = A[4]
            ev[2] = A[8]
            order[0] = 0
            order[1] = 1
            order[2] = 2
            # three-element sort, descending
            if ev[order[0]] < ev[order[1]]:
                tmp = order[0]; order[0] = order[1]; order[1] = tmp
            if ev[order[1]] < ev[order[2]]:
                tmp = order[1]; order[1] = order[2]; order[2] = tmp
            if ev[order[0]] < ev[order[1]]:
                tmp = order[0]; order[0] = order[1]; order[1] = tmp
            for a in range(3):
                center[i, a] = m[a]
                col = order[a]
                vals[i, a] = ev[col]
                for b in range(3):
                    vecs[i, b, a] = V[3 * b + col]
    return center_arr, vals_arr, vecs_arr
