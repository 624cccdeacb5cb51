"""Pure numpy implementations of the hot kernels.

Arithmetic is ordered like the Cython versions so that smoothness values and
feature selections agree bit for bit between backends.
"""

import numpy as np

EDGE = 0
PLANE = 1


def scan_smoothness(points, ring_offsets, half_width, literal=False, disc_ratio=1.5):
    """Per-point smoothness plus validity and occlusion flags.

    Returns ``(sigma, valid, edge_ok)``. ``valid`` is False for points without a
    full neighbourhood on both sides; ``edge_ok`` is False where the
    neighbourhood straddles a gap larger than ``disc_ratio`` times its median
    spacing.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n_pts = len(points)
    sigma = np.zeros(n_pts)
    valid = np.zeros(n_pts, dtype=bool)
    edge_ok = np.zeros(n_pts, dtype=bool)
    w = int(half_width)
    count = 2 * w
    for m in range(len(ring_offsets) - 1):
        a, b = int(ring_offsets[m]), int(ring_offsets[m + 1])
        n = b - a
        if n < 2 * w + 1:
            continue
        P = points[a:b]
        centre = P[w:n - w]
        acc_x = np.zeros(n - 2 * w)
        acc_y = np.zeros(n - 2 * w)
        acc_z = np.zeros(n - 2 * w)
        for j in range(-w, w + 1):
            if j == 0:
                continue
            nb = P[w + j:n - w + j]
            dx = nb[:, 0] - centre[:, 0]
            dy = nb[:, 1] - centre[:, 1]
            dz = nb[:, 2] - centre[:, 2]
            if literal:
                acc_x = acc_x + np.sqrt(dx * dx + dy * dy + dz * dz)
            else:
                acc_x = acc_x + dx
                acc_y = acc_y + dy
                acc_z = acc_z + dz
        if literal:
            sig = acc_x / count
        else:
            sig = np.sqrt(acc_x * acc_x + acc_y * acc_y + acc_z * acc_z) / count
        sigma[a + w:b - w] = sig
        valid[a + w:b - w] = True

        d = P[1:] - P[:-1]
        gaps = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2])
        win = np.lib.stride_tricks.sliding_window_view(gaps, count)
        srt = np.sort(win, axis=1)
        med = 0.5 * (srt[:, w - 1] + srt[:, w])
        edge_ok[a + w:b - w] = srt[:, -1] <= disc_ratio * med
    return sigma, valid, edge_ok


def _pick(order, suppressed, ring_lo, ring_hi, cap, w, out):
    taken = 0
    for i in order:
        if taken >= cap:
            break
        if suppressed[i]:
            continue
        out.append(i)
        taken += 1
        suppressed[max(ring_lo, i - w):min(ring_hi, i + w + 1)] = True


def select_features(sigma, valid, edge_ok, azimuth, ring_offsets, sectors, max_edges,
                    max_planars, edge_min, planar_max, half_width, suppress=True):
    """Indices of selected edge and planar points, in ring-major index order."""
    edges, planars = [], []
    w = int(half_width) if suppress else 0
    n_pts = len(sigma)
    sup_e = np.zeros(n_pts, dtype=bool)
    sup_p = np.zeros(n_pts, dtype=bool)
    sector_of = np.minimum((azimuth * sectors).astype(np.int64), sectors - 1)
    for m in range(len(ring_offsets) - 1):
        a, b = int(ring_offsets[m]), int(ring_offsets[m + 1])
        if b - a == 0:
            continue
        idx = np.arange(a, b)
        sig = sigma[a:b]
        ok = valid[a:b]
        e_cand = idx[ok & edge_ok[a:b] & (sig >= edge_min)]
        p_cand = idx[ok & (sig <= planar_max)]
        e_order = e_cand[np.lexsort((e_cand, -sigma[e_cand]))]
        p_order = p_cand[np.lexsort((p_cand, sigma[p_cand]))]
        e_sec = sector_of[e_order]
        p_sec = sector_of[p_order]
        for s in range(sectors):
            if max_edges > 0:
                _pick(e_order[e_sec == s].tolist(), sup_e, a, b, max_edges, w, edges)
            if max_planars > 0:
                _pick(p_order[p_sec == s].tolist(), sup_p, a, b, max_planars, w, planars)
    return np.sort(np.asarray(edges, dtype=np.int64)), np.sort(np.asarray(planars, dtype=np.int64))


def covariance_eigen(groups):
    """Centroid, eigenvalues (descending) and eigenvectors (columns) of each ``(k, 3)`` group's covariance."""
    groups = np.asarray(groups, dtype=np.float64)
    center = groups.mean(axis=-2)
    d = groups - center[..., None, :]
    cov = np.einsum("...ni,...nj->...ij", d, d) / groups.shape[-2]
    vals, vecs = np.linalg.eigh(cov)
    return center, vals[..., ::-1].copy(), vecs[..., ::-1].copy()


def residual_rows(points, R, t, centers, dirs, kinds, weights, huber_delta=0.0):
    """Weighted residuals and 1x6 Jacobian rows for point-to-line / point-to-plane terms.

    Returns ``(dist, rows, r, cost)``: the unweighted distances, the weighted
    Jacobian rows ``(n, 6)``, the weighted residuals, and ``0.5 * sum(r**2)``
    (with the Huber penalty in place of the square when enabled).
    """
    points = np.asarray(points, dtype=np.float64)
    q = points @ np.asarray(R).T + np.asarray(t)
    d = q - centers
    is_edge = kinds == EDGE
    x = np.cross(d, dirs)
    f_edge = np.sqrt(np.einsum("ij,ij->i", x, x))
    f_plane = np.einsum("ij,ij->i", d, dirs)
    dist = np.where(is_edge, f_edge, f_plane)
    safe = np.where(f_edge < 1e-12, 1.0, f_edge)
    pn = x / safe[:, None]
    grad_edge = np.cross(dirs, pn)
    grad_edge[f_edge < 1e-12] = 0.0
    grad = np.where(is_edge[:, None], grad_edge, dirs)
    rows = np.empty((len(points), 6))
    rows[:, :3] = grad
    rows[:, 3:] = np.cross(q, grad)
    scale = np.asarray(weights, dtype=np.float64).copy()
    absd = np.abs(dist)
    if huber_delta > 0.0:
        over = absd > huber_delta
        scale = np.where(over, scale * np.sqrt(huber_delta / np.where(over, absd, 1.0)), scale)
        rho = np.where(over, 2.0 * huber_delta * absd - huber_delta * huber_delta, dist * dist)
    else:
        rho = dist * dist
    rows *= scale[:, None]
    r = scale * dist
    cost = 0.5 * float(np.sum(np.asarray(weights) ** 2 * rho))
    return dist, rows, r, cost


def normal_equations(points, R, t, centers, dirs, kinds, weights, huber_delta=0.0):
    """Gauss-Newton system ``H = J^T J``, ``g = J^T r`` and the cost."""
    _, rows, r, cost = residual_rows(points, R, t, centers, dirs, kinds, weights, huber_delta)
    # einsum without BLAS sums rows in index order: reproducible run to run
    H = np.einsum("ni,nj->ij", rows, rows, optimize=False)
    g = np.einsum("ni,n->i", rows, r, optimize=False)
    return H, g, cost
