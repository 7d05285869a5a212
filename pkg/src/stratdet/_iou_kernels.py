"""Pairwise intersection area of convex CCW quadrilaterals.

Two interchangeable implementations:

* ``_intersection_matrix_jit``: Sutherland-Hodgman clipping per pair,
  compiled with numba.
* ``intersection_matrix_numpy``: fully vectorized over all pairs. Collects
  every candidate vertex of the intersection (corners of either polygon
  lying inside the other, plus all edge/edge crossings), orders them by
  angle around their mean and takes the shoelace area.

The two share no code, so each serves as a check on the other.
"""

import numpy as np

from ._accel import njit

_EPS = 1e-12


@njit(cache=True)
def _clip_area(a, b):
    # subject polygon starts as a; clipped in turn against every edge of b
    buf_in = np.empty((16, 2))
    buf_out = np.empty((16, 2))
    n = a.shape[0]
    for i in range(n):
        buf_in[i, 0] = a[i, 0]
        buf_in[i, 1] = a[i, 1]
    m = b.shape[0]
    for e in range(m):
        ex0 = b[e, 0]
        ey0 = b[e, 1]
        ex1 = b[(e + 1) % m, 0]
        ey1 = b[(e + 1) % m, 1]
        dx = ex1 - ex0
        dy = ey1 - ey0
        k = 0
        for i in range(n):
            px = buf_in[i, 0]
            py = buf_in[i, 1]
            qx = buf_in[(i + 1) % n, 0]
            qy = buf_in[(i + 1) % n, 1]
            sp = dx * (py - ey0) - dy * (px - ex0)
            sq = dx * (qy - ey0) - dy * (qx - ex0)
            if sp >= 0.0:
                buf_out[k, 0] = px
                buf_out[k, 1] = py
                k += 1
                if sq < 0.0:
                    t = sp / (sp - sq)
                    buf_out[k, 0] = px + t * (qx - px)
                    buf_out[k, 1] = py + t * (qy - py)
                    k += 1
            elif sq >= 0.0:
                t = sp / (sp - sq)
                buf_out[k, 0] = px + t * (qx - px)
                buf_out[k, 1] = py + t * (qy - py)
                k += 1
        n = k
        if n < 3:
            return 0.0
        for i in range(n):
            buf_in[i, 0] = buf_out[i, 0]
            buf_in[i, 1] = buf_out[i, 1]
    area = 0.0
    for i in range(n):
        j = (i + 1) % n
        area += buf_in[i, 0] * buf_in[j, 1] - buf_in[j, 0] * buf_in[i, 1]
    return max(0.5 * area, 0.0)


@njit(cache=True)
def _intersection_matrix_jit(polys_a, polys_b):
    na = polys_a.shape[0]
    nb = polys_b.shape[0]
    out = np.zeros((na, nb))
    for i in range(na):
        ax0 = polys_a[i, :, 0].min()
        ax1 = polys_a[i, :, 0].max()
        ay0 = polys_a[i, :, 1].min()
        ay1 = polys_a[i, :, 1].max()
        for j in range(nb):
            # cheap axis-aligned reject
            if (polys_b[j, :, 0].max() <= ax0 or polys_b[j, :, 0].min() >= ax1
                    or polys_b[j, :, 1].max() <= ay0 or polys_b[j, :, 1].min() >= ay1):
                continue
            out[i, j] = _clip_area(polys_a[i], polys_b[j])
    return out


def _inside(points, polys):
    """points (N,P,2) tested against convex CCW polys (N,V,2) -> (N,P) bool."""
    v0 = polys
    v1 = np.roll(polys, -1, axis=1)
    edge = v1 - v0  # (N,V,2)
    rel = points[:, :, None, :] - v0[:, None, :, :]  # (N,P,V,2)
    cross = edge[:, None, :, 0] * rel[..., 1] - edge[:, None, :, 1] * rel[..., 0]
    scale = np.abs(edge).sum(axis=-1).max(axis=-1)[:, None, None] + 1.0
    return np.all(cross >= -_EPS * scale, axis=-1)


def _edge_crossings(a, b):
    """All edge/edge intersections of a (N,4,2) with b (N,4,2) -> points, valid."""
    p = a[:, :, None, :]
    r = (np.roll(a, -1, axis=1) - a)[:, :, None, :]
    q = b[:, None, :, :]
    s = (np.roll(b, -1, axis=1) - b)[:, None, :, :]
    denom = r[..., 0] * s[..., 1] - r[..., 1] * s[..., 0]  # (N,4,4)
    qp = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[..., 0] * s[..., 1] - qp[..., 1] * s[..., 0]) / denom
        u = (qp[..., 0] * r[..., 1] - qp[..., 1] * r[..., 0]) / denom
    valid = (np.abs(denom) > _EPS) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    pts = p + np.where(valid, t, 0.0)[..., None] * r
    n = a.shape[0]
    return pts.reshape(n, -1, 2), valid.reshape(n, -1)


def intersection_areas_numpy(a, b):
    """Row-wise intersection area of convex CCW polygon pairs a[k], b[k]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    if n == 0:
        return np.zeros(0)
    cross_pts, cross_ok = _edge_crossings(a, b)
    pts = np.concatenate([a, b, cross_pts], axis=1)
    ok = np.concatenate([_inside(a, b), _inside(b, a), cross_ok], axis=1)
    count = ok.sum(axis=1)
    w = ok.astype(float)
    centre = (pts * w[..., None]).sum(axis=1) / np.maximum(count, 1)[:, None]
    rel = pts - centre[:, None, :]
    ang = np.where(ok, np.arctan2(rel[..., 1], rel[..., 0]), np.inf)
    order = np.argsort(ang, axis=1, kind="stable")
    srt = np.take_along_axis(pts, order[..., None], axis=1)
    ok_srt = np.take_along_axis(ok, order, axis=1)
    # pad invalid tail with the first point: closing edges collapse to zero length
    srt = np.where(ok_srt[..., None], srt, srt[:, :1, :])
    nxt = np.roll(srt, -1, axis=1)
    area = 0.5 * (srt[..., 0] * nxt[..., 1] - nxt[..., 0] * srt[..., 1]).sum(axis=1)
    return np.where(count >= 3, np.maximum(area, 0.0), 0.0)


def intersection_matrix_numpy(polys_a, polys_b, chunk=65536):
    polys_a = np.asarray(polys_a, dtype=float)
    polys_b = np.asarray(polys_b, dtype=float)
    na, nb = polys_a.shape[0], polys_b.shape[0]
    out = np.zeros((na, nb))
    if na == 0 or nb == 0:
        return out
    ia, ib = np.meshgrid(np.arange(na), np.arange(nb), indexing="ij")
    ia, ib = ia.ravel(), ib.ravel()
    # same axis-aligned reject as the compiled path
    lo_a, hi_a = polys_a.min(axis=1), polys_a.max(axis=1)
    lo_b, hi_b = polys_b.min(axis=1), polys_b.max(axis=1)
    keep = np.all((hi_b[ib] > lo_a[ia]) & (lo_b[ib] < hi_a[ia]), axis=1)
    ia, ib = ia[keep], ib[keep]
    flat = np.zeros(ia.shape[0])
    for s in range(0, ia.shape[0], chunk):
        flat[s:s + chunk] = intersection_areas_numpy(polys_a[ia[s:s + chunk]], polys_b[ib[s:s + chunk]])
    out[ia, ib] = flat
    return out


def intersection_matrix_jit(polys_a, polys_b):
    polys_a = np.ascontiguousarray(polys_a, dtype=np.float64)
    polys_b = np.ascontiguousarray(polys_b, dtype=np.float64)
    return _intersection_matrix_jit(polys_a.reshape(-1, polys_a.shape[-2], 2),
                                    polys_b.reshape(-1, polys_b.shape[-2], 2))
