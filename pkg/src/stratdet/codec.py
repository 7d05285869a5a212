"""Conversion between network output space and 3D box parameters.

A prediction at grid cell ``(X_P, Y_P)`` of a level with minimum depth
``Z_i`` decodes as::

    Z = Z_i * 2**z_hat
    X = (X_P + u_hat - c_u) * Z / f_u
    Y = (Y_P + v_hat - c_v) * Z / f_v
    W, L, H = w0 * exp(w_hat), l0 * exp(l_hat), h0 * exp(h_hat)
    beta = theta_hat if alpha_hat == 1 else -theta_hat
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, NamedTuple, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .geometry import (beta_from_rotation_y, project, project_box_2d, rotation_y_from_beta,
                       viewing_ray_angle, wrap_angle)
from .kitti_io import CameraCalib, Detection, GroundTruthObject
from .stratify import StratLevel

RAW_CHANNELS = ("u_hat", "v_hat", "z_hat", "w_hat", "l_hat", "h_hat", "alpha_hat", "theta_hat")


class RawPrediction(NamedTuple):
    u_hat: float
    v_hat: float
    z_hat: float
    w_hat: float
    l_hat: float
    h_hat: float
    alpha_hat: float
    theta_hat: float


@dataclass(frozen=True)
class GridCell:
    x_p: float
    y_p: float
    level: StratLevel

    @classmethod
    def at(cls, row: int, col: int, level: StratLevel) -> "GridCell":
        return cls((col + 0.5) * level.stride, (row + 0.5) * level.stride, level)


@dataclass(frozen=True)
class PresetSize:
    w0: float
    l0: float
    h0: float

    def __post_init__(self):
        if not (self.w0 > 0 and self.l0 > 0 and self.h0 > 0):
            raise ValueError(f"preset sizes must be positive: {self}")


class DecodedBox(NamedTuple):
    center3d: Tuple[float, float, float]
    size3d: Tuple[float, float, float]  # H, W, L
    beta: float


def decode(raw: RawPrediction, cell: GridCell, preset: PresetSize, calib: CameraCalib) -> DecodedBox:
    """Recover centre, size and observation angle. ``alpha_hat`` is thresholded at 0.5."""
    z = cell.level.z_min * 2.0 ** raw.z_hat
    x = (cell.x_p + raw.u_hat - calib.c_u) * z / calib.f_u
    y = (cell.y_p + raw.v_hat - calib.c_v) * z / calib.f_v
    size = (preset.h0 * math.exp(raw.h_hat), preset.w0 * math.exp(raw.w_hat), preset.l0 * math.exp(raw.l_hat))
    beta = raw.theta_hat if raw.alpha_hat >= 0.5 else -raw.theta_hat
    return DecodedBox((x, y, z), size, beta)


def encode(gt: GroundTruthObject, cell: GridCell, preset: PresetSize, calib: CameraCalib) -> RawPrediction:
    """Exact inverse of :func:`decode` for a ground-truth box."""
    x, y, z = gt.center3d
    if not z > 0:
        raise DomainError(f"cannot encode a box at Z={z}")
    h, w, l = gt.size3d
    if not (h > 0 and w > 0 and l > 0):
        raise DomainError(f"cannot encode non-positive size {gt.size3d}")
    u, v = project(gt.center3d, calib)
    ang = beta_from_rotation_y(gt.rotation_y, gt.center3d)
    return RawPrediction(
        u_hat=u - cell.x_p,
        v_hat=v - cell.y_p,
        z_hat=math.log2(z / cell.level.z_min),
        w_hat=math.log(w / preset.w0),
        l_hat=math.log(l / preset.l0),
        h_hat=math.log(h / preset.h0),
        alpha_hat=float(ang.alpha_bit),
        theta_hat=ang.theta,
    )


def preset_from_dataset(objects: Iterable[GroundTruthObject], class_name: str) -> PresetSize:
    sizes = [o.size3d for o in objects if o.class_name == class_name]
    if not sizes:
        raise ValueError(f"no objects of class {class_name!r}")
    h, w, l = np.mean(np.asarray(sizes, dtype=float), axis=0)
    return PresetSize(w0=float(w), l0=float(l), h0=float(h))


def presets_from_dataset(objects: Iterable[GroundTruthObject]) -> Dict[str, PresetSize]:
    objects = [o for o in objects if not o.is_dontcare]
    return {c: preset_from_dataset(objects, c) for c in sorted({o.class_name for o in objects})}


def decode_arrays(raw: np.ndarray, x_p, y_p, z_min, preset: PresetSize, calib: CameraCalib):
    """Vectorized decode. ``raw`` has the eight channels on its last axis.

    Returns ``(centers (...,3), sizes (...,3) as H,W,L, beta (...))``.
    """
    raw = np.asarray(raw, dtype=float)
    u, v, zh, wh, lh, hh, ah, th = np.moveaxis(raw, -1, 0)
    z = np.asarray(z_min, dtype=float) * np.exp2(zh)
    x = (x_p + u - calib.c_u) * z / calib.f_u
    y = (y_p + v - calib.c_v) * z / calib.f_v
    sizes = np.stack([preset.h0 * np.exp(hh), preset.w0 * np.exp(wh), preset.l0 * np.exp(lh)], axis=-1)
    beta = np.where(ah >= 0.5, th, -th)
    return np.stack([x, y, z], axis=-1), sizes, beta


def decode_feature_map(raw_map: np.ndarray, scores: np.ndarray, level: StratLevel, preset: PresetSize,
                       calib: CameraCalib, class_name: str, threshold: float = 0.05):
    """Turn one level's dense output (rows, cols, 8) into KITTI detections.

    Cells with ``scores`` below ``threshold`` are skipped. The 2D box of each
    detection is the projection of its decoded 3D box (or all -1 when the box
    crosses the image plane).
    """
    rows, cols = raw_map.shape[:2]
    xs = (np.arange(cols) + 0.5) * level.stride
    ys = (np.arange(rows) + 0.5) * level.stride
    xp, yp = np.meshgrid(xs, ys)
    centers, sizes, beta = decode_arrays(raw_map, xp, yp, level.z_min, preset, calib)
    dets = []
    for r, c in zip(*np.nonzero(scores >= threshold)):
        ctr = tuple(float(t) for t in centers[r, c])
        size = tuple(float(t) for t in sizes[r, c])
        ry = rotation_y_from_beta(float(beta[r, c]), ctr)
        try:
            box2d = project_box_2d(ctr, size, ry, calib)
        except DomainError:
            box2d = (-1.0, -1.0, -1.0, -1.0)
        dets.append(Detection(class_name=class_name, truncation=-1.0, occlusion=-1,
                              alpha_obs=wrap_angle(ry - viewing_ray_angle(ctr)), bbox2d=box2d, size3d=size, center3d=ctr,
                              rotation_y=ry, score=float(scores[r, c])))
    return dets


def encode_targets(objects: Sequence[GroundTruthObject], labels: np.ndarray, level: StratLevel,
                   presets: Mapping[str, PresetSize], calib: CameraCalib) -> np.ndarray:
    """Regression targets (rows, cols, 8) for every positive cell of ``labels``; NaN elsewhere."""
    out = np.full(labels.shape + (8,), np.nan)
    xs = (np.arange(labels.shape[1]) + 0.5) * level.stride
    ys = (np.arange(labels.shape[0]) + 0.5) * level.stride
    for r, c in zip(*np.nonzero(labels >= 0)):
        o = objects[labels[r, c]]
        cell = GridCell(float(xs[c]), float(ys[r]), level)
        out[r, c] = encode(o, cell, presets[o.class_name], calib)
    return out
