"""Reading and writing KITTI object labels, calibration and detection results.

Label rows carry 15 whitespace separated columns::

    type truncated occluded alpha left top right bottom h w l x y z rotation_y

Detection rows append a 16th ``score`` column. Calibration files hold
``KEY: v0 ... vN`` rows of which only ``P2`` (left colour camera) is used.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import KittiParseError

LABEL_COLUMNS = 15
DETECTION_COLUMNS = 16
PRECISION = 6

Vec3 = Tuple[float, float, float]
Box2D = Tuple[float, float, float, float]


@dataclass(frozen=True)
class GroundTruthObject:
    class_name: str
    truncation: float
    occlusion: int
    alpha_obs: float
    bbox2d: Box2D  # left, top, right, bottom
    size3d: Vec3  # H, W, L
    center3d: Vec3  # X, Y, Z (bottom centre, camera frame)
    rotation_y: float

    @property
    def height2d(self) -> float:
        return self.bbox2d[3] - self.bbox2d[1]

    @property
    def depth(self) -> float:
        return self.center3d[2]

    @property
    def is_dontcare(self) -> bool:
        return self.class_name == "DontCare"


@dataclass(frozen=True)
class Detection(GroundTruthObject):
    score: float = 0.0

    def with_score(self, score: float) -> "Detection":
        return Detection(**{**self.__dict__, "score": float(score)})


@dataclass(frozen=True)
class CameraCalib:
    """Pinhole intrinsics plus the full ``P2`` matrix (3 rows of 4)."""

    f_u: float
    f_v: float
    c_u: float
    c_v: float
    P2: Tuple[Tuple[float, ...], ...] = ()

    def __post_init__(self):
        if not (self.f_u > 0 and self.f_v > 0):
            raise ValueError(f"focal lengths must be positive, got {self.f_u}, {self.f_v}")
        if not self.P2:
            P2 = (
                (self.f_u, 0.0, self.c_u, 0.0),
                (0.0, self.f_v, self.c_v, 0.0),
                (0.0, 0.0, 1.0, 0.0),
            )
            object.__setattr__(self, "P2", P2)

    @classmethod
    def from_projection(cls, values: Sequence[float]) -> "CameraCalib":
        if len(values) != 12:
            raise ValueError(f"P2 needs 12 values, got {len(values)}")
        rows = tuple(tuple(float(v) for v in values[i * 4:(i + 1) * 4]) for i in range(3))
        return cls(f_u=rows[0][0], f_v=rows[1][1], c_u=rows[0][2], c_v=rows[1][2], P2=rows)


def _float(tok: str, what: str, lineno: int, source) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise KittiParseError(f"non-numeric {what} {tok!r}", lineno, source) from None
    if not math.isfinite(val):
        raise KittiParseError(f"non-finite {what} {tok!r}", lineno, source)
    return val


def _int(tok: str, what: str, lineno: int, source) -> int:
    val = _float(tok, what, lineno, source)
    if val != int(val):
        raise KittiParseError(f"{what} must be an integer, got {tok!r}", lineno, source)
    return int(val)


def _parse_rows(text: str, ncols: int, source=None):
    for lineno, line in enumerate(text.splitlines(), start=1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != ncols:
            raise KittiParseError(f"expected {ncols} columns, got {len(toks)}", lineno, source)
        yield lineno, toks


def _object_fields(toks: List[str], lineno: int, source) -> dict:
    num = [_float(t, f"column {i + 2}", lineno, source) for i, t in enumerate(toks[1:15])]
    return dict(
        class_name=toks[0],
        truncation=num[0],
        occlusion=_int(toks[2], "occlusion", lineno, source),
        alpha_obs=num[2],
        bbox2d=(num[3], num[4], num[5], num[6]),
        size3d=(num[7], num[8], num[9]),
        center3d=(num[10], num[11], num[12]),
        rotation_y=num[13],
    )


def parse_label_file(text: str, source=None) -> List[GroundTruthObject]:
    """Parse KITTI label text. DontCare rows are kept.

    Raises
    ------
    KittiParseError
        On a wrong column count or a non-numeric field, with the 1-based line.
    """
    return [GroundTruthObject(**_object_fields(toks, n, source))
            for n, toks in _parse_rows(text, LABEL_COLUMNS, source)]


def parse_detection_file(text: str, source=None) -> List[Detection]:
    dets = []
    for n, toks in _parse_rows(text, DETECTION_COLUMNS, source):
        fields = _object_fields(toks, n, source)
        score = _float(toks[15], "score", n, source)
        if score < 0:
            raise KittiParseError(f"negative score {score}", n, source)
        dets.append(Detection(score=score, **fields))
    return dets


def parse_calib_file(text: str, source=None) -> CameraCalib:
    for lineno, line in enumerate(text.splitlines(), start=1):
        key, sep, rest = line.partition(":")
        if not sep or key.strip() != "P2":
            continue
        toks = rest.split()
        if len(toks) != 12:
            raise KittiParseError(f"P2 row needs 12 numbers, got {len(toks)}", lineno, source)
        vals = [_float(t, "P2 entry", lineno, source) for t in toks]
        try:
            return CameraCalib.from_projection(vals)
        except ValueError as exc:
            raise KittiParseError(str(exc), lineno, source) from None
    raise KittiParseError("no 'P2:' row", None, source)


def _fmt(x: float) -> str:
    s = f"{x:.{PRECISION}f}"
    return "0.000000" if s == "-0.000000" else s


def _object_columns(obj: GroundTruthObject) -> List[str]:
    cols = [obj.class_name, _fmt(obj.truncation), str(int(obj.occlusion)), _fmt(obj.alpha_obs)]
    cols += [_fmt(v) for v in obj.bbox2d]
    cols += [_fmt(v) for v in obj.size3d]
    cols += [_fmt(v) for v in obj.center3d]
    cols.append(_fmt(obj.rotation_y))
    return cols


def write_label_file(objects: Iterable[GroundTruthObject]) -> str:
    return "".join(" ".join(_object_columns(o)) + "\n" for o in objects)


def write_detection_file(dets: Iterable[Detection]) -> str:
    """Serialize detections as 16-column rows at 6 decimal places."""
    return "".join(" ".join(_object_columns(d) + [_fmt(d.score)]) + "\n" for d in dets)


def format_calib(calib: CameraCalib) -> str:
    return "P2: " + " ".join(f"{v:.12e}" for row in calib.P2 for v in row) + "\n"


def frame_id(path) -> str:
    return Path(path).stem


def list_frames(directory) -> Dict[str, Path]:
    """Map frame id (file stem) to path for every ``*.txt`` in ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return {p.stem: p for p in sorted(directory.glob("*.txt"))}


def read_label_dir(directory, frames: Optional[Iterable[str]] = None) -> Dict[str, List[GroundTruthObject]]:
    paths = list_frames(directory)
    keys = sorted(paths) if frames is None else [f for f in frames if f in paths]
    return {k: parse_label_file(paths[k].read_text(), source=os.fspath(paths[k])) for k in keys}


def read_detection_dir(directory, frames: Optional[Iterable[str]] = None) -> Dict[str, List[Detection]]:
    paths = list_frames(directory)
    keys = sorted(paths) if frames is None else [f for f in frames if f in paths]
    return {k: parse_detection_file(paths[k].read_text(), source=os.fspath(paths[k])) for k in keys}


def read_calib_dir(directory, frames: Optional[Iterable[str]] = None) -> Dict[str, CameraCalib]:
    paths = list_frames(directory)
    keys = sorted(paths) if frames is None else [f for f in frames if f in paths]
    return {k: parse_calib_file(paths[k].read_text(), source=os.fspath(paths[k])) for k in keys}
