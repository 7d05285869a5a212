"""Depth stratification across feature levels and per-cell label assignment.

Each feature level regresses objects inside its own depth interval. The
intervals grow geometrically with the stride and overlap their neighbours,
so objects near a boundary are seen by two levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Set, Tuple

import numpy as np

from .errors import DomainError
from .kitti_io import CameraCalib, GroundTruthObject

NEGATIVE = -1
IGNORE = -2


@dataclass(frozen=True)
class StratLevel:
    index: int
    stride: int
    z_min: float
    z_max: float

    def __post_init__(self):
        if not self.z_min < self.z_max:
            raise ValueError(f"level {self.index}: z_min {self.z_min} >= z_max {self.z_max}")
        if self.stride <= 0 or self.stride & (self.stride - 1):
            raise ValueError(f"level {self.index}: stride {self.stride} is not a power of two")


@dataclass(frozen=True)
class StratConfig:
    levels: Tuple[StratLevel, ...]
    z_lo: float
    z_hi: float

    def __post_init__(self):
        lv = self.levels
        if not lv:
            raise ValueError("need at least one level")
        if any(a.z_min > b.z_min for a, b in zip(lv, lv[1:])):
            raise ValueError("levels must be ordered by z_min")
        if lv[0].z_min > self.z_lo or max(l.z_max for l in lv) < self.z_hi:
            raise ValueError("levels do not cover the global depth range")
        if any(b.z_min >= a.z_max for a, b in zip(lv, lv[1:])):
            raise ValueError("consecutive level ranges must overlap")

    def in_level(self, z: float, level: StratLevel) -> bool:
        if not self.z_lo <= z <= self.z_hi:
            return False
        if level.z_min <= z < level.z_max:
            return True
        # the far end of the global range is closed
        return z == self.z_hi == level.z_max


def default_config() -> StratConfig:
    """Three levels at strides 8/16/32 covering 5-20, 10-40 and 20-80 m."""
    return StratConfig(
        levels=(
            StratLevel(0, 8, 5.0, 20.0),
            StratLevel(1, 16, 10.0, 40.0),
            StratLevel(2, 32, 20.0, 80.0),
        ),
        z_lo=5.0,
        z_hi=80.0,
    )


def levels_for_depth(z: float, config: StratConfig = None) -> Set[int]:
    config = config or default_config()
    return {lv.index for lv in config.levels if config.in_level(z, lv)}


def depth_from_2d_size(size_2d: float, size3d: Sequence[float], calib: CameraCalib,
                       axis: str = "width") -> float:
    """Depth of an object from its image extent, assuming it faces the camera.

    ``Z = f * S / s + L / 2`` where ``S`` is the 3D width (``axis="width"``,
    focal ``f_u``) or height (``axis="height"``, focal ``f_v``) and ``s`` the
    matching 2D extent in pixels.
    """
    if not size_2d > 0:
        raise DomainError(f"2D size must be positive, got {size_2d}")
    h, w, l = size3d
    if axis == "width":
        return calib.f_u * w / size_2d + 0.5 * l
    if axis == "height":
        return calib.f_v * h / size_2d + 0.5 * l
    raise ValueError(f"axis must be 'width' or 'height', got {axis!r}")


@dataclass
class SizeDepthFit:
    """Scatter of (2D box height, depth) and the size/depth model through it."""

    scatter: np.ndarray  # (N, 2) columns h2d, Z
    curve: np.ndarray  # (K, 2) columns h2d, Z
    mean_height: float
    mean_length: float
    focal_v: float
    frames: List[str] = field(default_factory=list)

    def predict(self, h2d) -> np.ndarray:
        return self.focal_v * self.mean_height / np.asarray(h2d, dtype=float) + 0.5 * self.mean_length

    def relative_residuals(self) -> np.ndarray:
        z = self.scatter[:, 1]
        return np.abs(self.predict(self.scatter[:, 0]) - z) / z


def fit_curve_points(frames: Iterable[Tuple[Sequence[GroundTruthObject], CameraCalib]],
                     class_name: str = None, n_curve: int = 200) -> SizeDepthFit:
    """Collect (h2d, Z) for every usable object and evaluate the height form of the model.

    ``frames`` yields ``(objects, calib)`` per image. The curve uses the mean
    3D height and length of the collected objects and the mean ``f_v``.
    """
    rows, hs, ls, fv = [], [], [], []
    for objects, calib in frames:
        for o in objects:
            if o.is_dontcare or (class_name is not None and o.class_name != class_name):
                continue
            h2d = o.height2d
            if h2d <= 0 or o.depth <= 0:
                continue
            rows.append((h2d, o.depth))
            hs.append(o.size3d[0])
            ls.append(o.size3d[2])
            fv.append(calib.f_v)
    if not rows:
        raise ValueError("no objects to fit")
    scatter = np.array(rows, dtype=float)
    mean_h, mean_l, f_v = float(np.mean(hs)), float(np.mean(ls)), float(np.mean(fv))
    h_lo, h_hi = scatter[:, 0].min(), scatter[:, 0].max()
    if h_hi == h_lo:
        grid = np.array([h_lo])
    else:
        grid = np.linspace(h_lo, h_hi, n_curve)
    curve = np.column_stack([grid, f_v * mean_h / grid + 0.5 * mean_l])
    return SizeDepthFit(scatter, curve, mean_h, mean_l, f_v)


def grid_shape(image_size: Tuple[int, int], stride: int) -> Tuple[int, int]:
    """(rows, cols) of the feature grid for an image of (height, width)."""
    height, width = image_size
    return math.ceil(height / stride), math.ceil(width / stride)


def cell_centers(image_size: Tuple[int, int], stride: int):
    """Pixel coordinates (xs, ys) of the cell centres along each axis."""
    rows, cols = grid_shape(image_size, stride)
    return (np.arange(cols) + 0.5) * stride, (np.arange(rows) + 0.5) * stride


def assign_targets(objects: Sequence[GroundTruthObject], level: StratLevel,
                   image_size: Tuple[int, int], config: StratConfig = None) -> np.ndarray:
    """Label every cell of one level's grid.

    Returns an int array of grid shape holding the index into ``objects`` of
    the responsible object, ``NEGATIVE`` or ``IGNORE``. A cell is positive if
    its centre falls inside the 2D box of at least one object in the level's
    depth range, and then belongs to the nearest such object (lowest index on
    ties). Cells covered only by objects outside the level's range (including
    DontCare regions, whose depth is out of range by construction) are ignored.
    """
    config = config or default_config()
    xs, ys = cell_centers(image_size, level.stride)
    labels = np.full((ys.size, xs.size), NEGATIVE, dtype=np.int64)
    best_z = np.full(labels.shape, np.inf)
    covered_out = np.zeros(labels.shape, dtype=bool)
    for idx, o in enumerate(objects):
        left, top, right, bottom = o.bbox2d
        inside = ((ys[:, None] >= top) & (ys[:, None] <= bottom)
                  & (xs[None, :] >= left) & (xs[None, :] <= right))
        if not inside.any():
            continue
        if config.in_level(o.depth, level):
            take = inside & (o.depth < best_z)
            labels[take] = idx
            best_z[take] = o.depth
        else:
            covered_out |= inside
    labels[(labels == NEGATIVE) & covered_out] = IGNORE
    return labels


def level_histogram(objects: Iterable[GroundTruthObject], config: StratConfig = None):
    """Count objects per level; objects outside every level land under key ``None``."""
    config = config or default_config()
    counts = {lv.index: 0 for lv in config.levels}
    counts[None] = 0
    for o in objects:
        hit = levels_for_depth(o.depth, config)
        if not hit:
            counts[None] += 1
        for i in hit:
            counts[i] += 1
    return counts
