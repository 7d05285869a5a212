"""Camera projection, observation angles and rotated bird's-eye-view boxes.

Ground-plane coordinates are the camera frame's (X, Z); Y points down and is
ignored in BEV. Box sizes follow the KITTI (H, W, L) order, and a box with
``rotation_y = 0`` has its length along +X.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _accel
from ._iou_kernels import intersection_matrix_jit, intersection_matrix_numpy
from .errors import DomainError
from .kitti_io import CameraCalib

HALF_PI = 0.5 * math.pi


class PixelPoint(NamedTuple):
    u: float
    v: float


class ObservationAngle(NamedTuple):
    """Folded observation angle.

    ``beta`` lies in (-pi/2, pi/2]; ``alpha_bit`` is 1 when ``beta > 0`` and
    ``theta = |beta|``, so ``beta == theta if alpha_bit else -theta``.
    ``flipped`` records that the raw angle was shifted by pi to get there.
    """

    beta: float
    alpha_bit: int
    theta: float
    flipped: bool = False


def project(center3d: Sequence[float], calib: CameraCalib) -> PixelPoint:
    x, y, z = center3d
    if not z > 0:
        raise DomainError(f"point behind the camera (Z={z})")
    return PixelPoint(calib.f_u * x / z + calib.c_u, calib.f_v * y / z + calib.c_v)


def back_project(pixel: Sequence[float], z: float, calib: CameraCalib):
    if not z > 0:
        raise DomainError(f"depth must be positive (Z={z})")
    u, v = pixel
    return ((u - calib.c_u) * z / calib.f_u, (v - calib.c_v) * z / calib.f_v, float(z))


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.remainder(a, 2.0 * math.pi)
    return math.pi if a == -math.pi else a


def viewing_ray_angle(center3d: Sequence[float]) -> float:
    return math.atan2(center3d[0], center3d[2])


def fold_beta(raw: float) -> ObservationAngle:
    """Fold any angle into (-pi/2, pi/2] using the pi-symmetry of a box."""
    b = wrap_angle(raw)
    flipped = False
    if b > HALF_PI:
        b -= math.pi
        flipped = True
    elif b <= -HALF_PI:
        b += math.pi
        flipped = True
    return ObservationAngle(b, 1 if b > 0 else 0, abs(b), flipped)


def beta_from_rotation_y(rotation_y: float, center3d: Sequence[float]) -> ObservationAngle:
    if not center3d[2] > 0:
        raise DomainError(f"object behind the camera (Z={center3d[2]})")
    return fold_beta(rotation_y - viewing_ray_angle(center3d))


def rotation_y_from_beta(beta: float, center3d: Sequence[float], flipped: bool = False) -> float:
    ry = beta + viewing_ray_angle(center3d) + (math.pi if flipped else 0.0)
    return wrap_angle(ry)


def bev_corners(x, z, w, l, ry):
    """Vectorized CCW footprints, shape (N, 4, 2) in (X, Z).

    Length runs along (cos ry, -sin ry), width along (sin ry, cos ry).
    """
    x, z, w, l, ry = (np.asarray(v, dtype=float).reshape(-1) for v in (x, z, w, l, ry))
    c, s = np.cos(ry), np.sin(ry)
    hl, hw = 0.5 * l, 0.5 * w
    dl = np.stack([c * hl, -s * hl], axis=-1)
    dw = np.stack([s * hw, c * hw], axis=-1)
    ctr = np.stack([x, z], axis=-1)
    return np.stack([ctr + dl + dw, ctr - dl + dw, ctr - dl - dw, ctr + dl - dw], axis=1)


def box_corners_bev(center3d: Sequence[float], size3d: Sequence[float], beta: float,
                    flipped: bool = False) -> np.ndarray:
    """BEV footprint (4, 2) of a box given its observation angle.

    The global yaw is recovered as ``beta`` plus the viewing-ray angle.
    """
    h, w, l = size3d
    if not (w > 0 and l > 0):
        raise DomainError(f"box footprint needs positive W and L, got {w}, {l}")
    if not center3d[2] > 0:
        raise DomainError(f"object behind the camera (Z={center3d[2]})")
    ry = rotation_y_from_beta(beta, center3d, flipped)
    return bev_corners(center3d[0], center3d[2], w, l, ry)[0]


def polygon_area(poly) -> float:
    """Signed shoelace area; positive for CCW."""
    p = np.asarray(poly, dtype=float)
    q = np.roll(p, -1, axis=0)
    return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))


def _areas(polys):
    q = np.roll(polys, -1, axis=1)
    return np.abs(0.5 * np.sum(polys[..., 0] * q[..., 1] - q[..., 0] * polys[..., 1], axis=-1))


def intersection_matrix(polys_a, polys_b, backend: Optional[str] = None) -> np.ndarray:
    """Pairwise intersection areas. ``backend`` is ``"numba"``, ``"numpy"`` or None (env default)."""
    if backend is None:
        backend = "numba" if _accel.USE_NUMBA else "numpy"
    polys_a = np.asarray(polys_a, dtype=float).reshape(-1, 4, 2)
    polys_b = np.asarray(polys_b, dtype=float).reshape(-1, 4, 2)
    if backend == "numba":
        return intersection_matrix_jit(polys_a, polys_b)
    if backend == "numpy":
        return intersection_matrix_numpy(polys_a, polys_b)
    raise ValueError(f"unknown backend {backend!r}")


def bev_iou_matrix(polys_a, polys_b, backend: Optional[str] = None) -> np.ndarray:
    polys_a = np.asarray(polys_a, dtype=float).reshape(-1, 4, 2)
    polys_b = np.asarray(polys_b, dtype=float).reshape(-1, 4, 2)
    inter = intersection_matrix(polys_a, polys_b, backend)
    union = _areas(polys_a)[:, None] + _areas(polys_b)[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    return np.clip(iou, 0.0, 1.0)


def bev_iou(a, b) -> float:
    """IoU of two convex CCW footprints; 0 when either is degenerate."""
    return float(bev_iou_matrix(a, b)[0, 0])


def iou3d_matrix(polys_a, y_a, h_a, polys_b, y_b, h_b, backend: Optional[str] = None) -> np.ndarray:
    """Volumetric IoU. ``y`` is the KITTI bottom face (Y down), so a box spans [y - h, y]."""
    polys_a = np.asarray(polys_a, dtype=float).reshape(-1, 4, 2)
    polys_b = np.asarray(polys_b, dtype=float).reshape(-1, 4, 2)
    y_a, h_a, y_b, h_b = (np.asarray(v, dtype=float).reshape(-1) for v in (y_a, h_a, y_b, h_b))
    inter_area = intersection_matrix(polys_a, polys_b, backend)
    top = np.maximum((y_a - h_a)[:, None], (y_b - h_b)[None, :])
    bottom = np.minimum(y_a[:, None], y_b[None, :])
    inter = inter_area * np.clip(bottom - top, 0.0, None)
    vol_a = _areas(polys_a) * h_a
    vol_b = _areas(polys_b) * h_b
    union = vol_a[:, None] + vol_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    return np.clip(iou, 0.0, 1.0)


def iou2d_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Axis-aligned image-plane IoU of (left, top, right, bottom) rows."""
    a = np.asarray(boxes_a, dtype=float).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=float).reshape(-1, 4)
    iw = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def object_footprints(objects) -> np.ndarray:
    """Stack BEV footprints of KITTI objects, shape (N, 4, 2)."""
    if not objects:
        return np.zeros((0, 4, 2))
    arr = np.array([(o.center3d[0], o.center3d[2], o.size3d[1], o.size3d[2], o.rotation_y) for o in objects])
    return bev_corners(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4])


def box3d_corners(center3d, size3d, rotation_y) -> np.ndarray:
    """Eight corners (8, 3) of a KITTI box; first four are the bottom face."""
    h = size3d[0]
    bev = bev_corners(center3d[0], center3d[2], size3d[1], size3d[2], rotation_y)[0]
    y = center3d[1]
    bottom = np.column_stack([bev[:, 0], np.full(4, y), bev[:, 1]])
    top = np.column_stack([bev[:, 0], np.full(4, y - h), bev[:, 1]])
    return np.vstack([bottom, top])


def project_box_2d(center3d, size3d, rotation_y, calib: CameraCalib):
    """Image-plane bounding rectangle (left, top, right, bottom) of a 3D box."""
    pts = box3d_corners(center3d, size3d, rotation_y)
    if np.any(pts[:, 2] <= 0):
        raise DomainError("box crosses the image plane")
    u = calib.f_u * pts[:, 0] / pts[:, 2] + calib.c_u
    v = calib.f_v * pts[:, 1] / pts[:, 2] + calib.c_v
    return float(u.min()), float(v.min()), float(u.max()), float(v.max())
