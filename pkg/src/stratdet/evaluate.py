"""KITTI-style BEV / 3D average precision and depth-error diagnostics.

Ground truth of the evaluated class counts at a difficulty when it meets
that difficulty's thresholds (so moderate includes easy objects). Harder
objects and neighbouring classes (Van for Car, Person_sitting for
Pedestrian) are "don't count": a detection matched to one of them is
neither a true nor a false positive. Detections overlapping a DontCare
region by 2D IoU > 0.5 are likewise dropped, as are detections whose 2D
box is shorter than the difficulty's minimum height.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from .geometry import iou2d_matrix, iou3d_matrix, bev_iou_matrix, object_footprints
from .kitti_io import GroundTruthObject

MIN_HEIGHT = (40.0, 25.0, 25.0)
MAX_OCCLUSION = (0, 1, 2)
MAX_TRUNCATION = (0.15, 0.30, 0.50)
NEIGHBOR_CLASSES = {"Car": ("Van",), "Pedestrian": ("Person_sitting",)}
DONTCARE_IOU = 0.5
DEPTH_BIN = 10.0
DEPTH_MAX = 80.0


class Difficulty(IntEnum):
    EASY = 0
    MODERATE = 1
    HARD = 2
    UNKNOWN = 3


def classify_difficulty(obj: GroundTruthObject) -> Difficulty:
    """Easiest KITTI difficulty whose height, occlusion and truncation limits the object meets."""
    h = obj.height2d
    for level in (Difficulty.EASY, Difficulty.MODERATE, Difficulty.HARD):
        if (h >= MIN_HEIGHT[level] and obj.occlusion <= MAX_OCCLUSION[level]
                and obj.truncation <= MAX_TRUNCATION[level]):
            return level
    return Difficulty.UNKNOWN


@dataclass
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray
    n_points: int

    def sample_points(self) -> np.ndarray:
        if self.n_points == 40:
            return np.arange(1, 41) / 40.0
        if self.n_points == 11:
            return np.arange(11) / 10.0
        raise ValueError(f"interpolation must use 40 or 11 points, got {self.n_points}")

    def interpolated(self) -> np.ndarray:
        """Precision envelope ``max_{r' >= r} p(r')`` at each sample point (0 past the curve end)."""
        pts = self.sample_points()
        if self.recall.size == 0:
            return np.zeros_like(pts)
        env = np.maximum.accumulate(self.precision[::-1])[::-1]
        idx = np.searchsorted(self.recall, pts - 1e-12, side="left")
        out = np.zeros_like(pts)
        ok = idx < self.recall.size
        out[ok] = env[idx[ok]]
        return out

    def average_precision(self) -> float:
        return float(self.interpolated().mean())


@dataclass
class APResult:
    ap: Optional[float]  # None when there is no ground truth to recall
    curve: PrCurve
    n_gt: int
    n_tp: int
    n_fp: int

    @property
    def has_data(self) -> bool:
        return self.ap is not None


@dataclass
class _Frame:
    det_scores: np.ndarray
    det_heights: np.ndarray
    det_dontcare: np.ndarray  # bool per detection
    iou: np.ndarray  # (n_det, n_gt) against relevant gt
    gt_class: np.ndarray  # True for the evaluated class, False for neighbours
    gt_difficulty: np.ndarray


def _iou(dets, gts, mode, backend=None):
    if mode == "bev":
        return bev_iou_matrix(object_footprints(dets), object_footprints(gts), backend)
    if mode == "3d":
        ya = [d.center3d[1] for d in dets]
        ha = [d.size3d[0] for d in dets]
        yb = [g.center3d[1] for g in gts]
        hb = [g.size3d[0] for g in gts]
        return iou3d_matrix(object_footprints(dets), ya, ha, object_footprints(gts), yb, hb, backend)
    raise ValueError(f"mode must be 'bev' or '3d', got {mode!r}")


def _prepare(gts, dets, class_name, mode, backend=None) -> _Frame:
    neighbours = NEIGHBOR_CLASSES.get(class_name, ())
    rel = [g for g in gts if g.class_name == class_name or g.class_name in neighbours]
    dc = [g for g in gts if g.is_dontcare]
    ds = [d for d in dets if d.class_name == class_name]
    iou = _iou(ds, rel, mode, backend) if ds and rel else np.zeros((len(ds), len(rel)))
    if ds and dc:
        dc_hit = (iou2d_matrix([d.bbox2d for d in ds], [g.bbox2d for g in dc]) > DONTCARE_IOU).any(axis=1)
    else:
        dc_hit = np.zeros(len(ds), dtype=bool)
    return _Frame(
        det_scores=np.array([d.score for d in ds], dtype=float),
        det_heights=np.array([d.height2d for d in ds], dtype=float),
        det_dontcare=dc_hit,
        iou=iou,
        gt_class=np.array([g.class_name == class_name for g in rel], dtype=bool),
        gt_difficulty=np.array([classify_difficulty(g) for g in rel], dtype=int),
    )


def match_frame(iou: np.ndarray, scores: np.ndarray, gt_valid: np.ndarray, gt_dontcount: np.ndarray,
                threshold: float, det_skip: Optional[np.ndarray] = None,
                det_dontcare: Optional[np.ndarray] = None):
    """Greedy matching of one frame.

    Detections are visited by descending score (input order breaks ties). Each
    takes the unmatched valid GT with the highest IoU >= ``threshold``; failing
    that, an unmatched don't-count GT at that IoU absorbs it; failing that, a
    DontCare overlap drops it; otherwise it is a false positive.

    Returns ``(det_state, det_gt)``: state is 1 for TP, 0 for FP and -1 for
    dropped; ``det_gt`` is the matched GT index or -1.
    """
    n_det, n_gt = iou.shape if iou.ndim == 2 else (len(scores), 0)
    state = np.full(n_det, -1, dtype=int)
    det_gt = np.full(n_det, -1, dtype=int)
    taken = np.zeros(n_gt, dtype=bool)
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    for j in order:
        if det_skip is not None and det_skip[j]:
            continue
        if n_gt:
            row = iou[j]
            cand = gt_valid & ~taken & (row >= threshold)
            if cand.any():
                k = int(np.argmax(np.where(cand, row, -1.0)))
                taken[k] = True
                state[j] = 1
                det_gt[j] = k
                continue
            cand = gt_dontcount & ~taken & (row >= threshold)
            if cand.any():
                k = int(np.argmax(np.where(cand, row, -1.0)))
                taken[k] = True
                continue
        if det_dontcare is not None and det_dontcare[j]:
            continue
        state[j] = 0
    return state, det_gt


def pr_curve(scores: np.ndarray, is_tp: np.ndarray, n_gt: int, n_points: int = 40) -> PrCurve:
    """Precision/recall after each detection in descending score order."""
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    tp = np.cumsum(np.asarray(is_tp, dtype=float)[order])
    fp = np.arange(1, tp.size + 1) - tp
    recall = tp / n_gt if n_gt else np.zeros_like(tp)
    precision = tp / np.maximum(tp + fp, 1.0)
    return PrCurve(recall, precision, n_points)


def ap_from_pr(recall, precision, n_points: int = 40) -> float:
    return PrCurve(np.asarray(recall, float), np.asarray(precision, float), n_points).average_precision()


def _accumulate(frames: Sequence[_Frame], difficulty: int, threshold: float, n_points: int) -> APResult:
    scores, tps = [], []
    n_gt = 0
    for fr in frames:
        valid = fr.gt_class & (fr.gt_difficulty <= difficulty)
        n_gt += int(valid.sum())
        skip = fr.det_heights < MIN_HEIGHT[difficulty]
        state, _ = match_frame(fr.iou, fr.det_scores, valid, ~valid, threshold, skip, fr.det_dontcare)
        keep = state >= 0
        scores.append(fr.det_scores[keep])
        tps.append(state[keep] == 1)
    scores = np.concatenate(scores) if scores else np.zeros(0)
    tps = np.concatenate(tps) if tps else np.zeros(0, dtype=bool)
    curve = pr_curve(scores, tps, n_gt, n_points)
    ap = curve.average_precision() if n_gt else None
    return APResult(ap, curve, n_gt, int(tps.sum()), int((~tps).sum()))


def evaluate(gts_by_frame: Mapping[str, Sequence[GroundTruthObject]],
             dets_by_frame: Mapping[str, Sequence], class_name: str, iou_threshold: float = 0.7,
             mode: str = "bev", n_points: int = 40,
             difficulties: Sequence[Difficulty] = (Difficulty.EASY, Difficulty.MODERATE, Difficulty.HARD),
             backend: Optional[str] = None) -> Dict[Difficulty, APResult]:
    """AP for one class at several difficulties, sharing the per-frame IoU work.

    Frames are the keys of ``gts_by_frame``; a frame absent from
    ``dets_by_frame`` has no detections.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    frames = [_prepare(gts_by_frame[k], dets_by_frame.get(k, ()), class_name, mode, backend)
              for k in sorted(gts_by_frame)]
    return {Difficulty(d): _accumulate(frames, int(d), iou_threshold, n_points) for d in difficulties}


def evaluate_ap(gts_by_frame, dets_by_frame, class_name: str, difficulty: Difficulty = Difficulty.MODERATE,
                iou_threshold: float = 0.7, mode: str = "bev", n_points: int = 40) -> Optional[float]:
    """AP as a fraction, or ``None`` when no ground truth counts at this difficulty."""
    res = evaluate(gts_by_frame, dets_by_frame, class_name, iou_threshold, mode, n_points, (difficulty,))
    return res[Difficulty(difficulty)].ap


@dataclass
class DepthErrorReport:
    edges: np.ndarray  # bin edges, 0..80 step 10
    sum_abs: np.ndarray
    counts: np.ndarray
    unmatched: int = 0
    out_of_range: int = 0
    per_bin_gt: np.ndarray = field(default=None)

    @property
    def mean_abs(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.counts > 0, self.sum_abs / np.maximum(self.counts, 1), np.nan)


def depth_bin(z: float) -> Optional[int]:
    """10 m bin index over [0, 80]; the top edge belongs to the last bin."""
    n = int(round(DEPTH_MAX / DEPTH_BIN))
    if not 0.0 <= z <= DEPTH_MAX:
        return None
    return min(int(z // DEPTH_BIN), n - 1)


def depth_error_report(gts_by_frame, dets_by_frame, iou_threshold: float = 0.1, class_name: str = None,
                       mode: str = "bev") -> DepthErrorReport:
    """Mean |Z_det - Z_gt| per 10 m depth bin over each GT's best-overlapping detection.

    A GT with no detection of its class at IoU >= ``iou_threshold`` is counted
    as unmatched. GTs outside [0, 80] m are tallied in ``out_of_range``.
    """
    n = int(round(DEPTH_MAX / DEPTH_BIN))
    rep = DepthErrorReport(np.linspace(0.0, DEPTH_MAX, n + 1), np.zeros(n), np.zeros(n, dtype=int),
                           per_bin_gt=np.zeros(n, dtype=int))
    for key in sorted(gts_by_frame):
        gts = [g for g in gts_by_frame[key]
               if not g.is_dontcare and (class_name is None or g.class_name == class_name)]
        dets = list(dets_by_frame.get(key, ()))
        for g in gts:
            b = depth_bin(g.depth)
            if b is None:
                rep.out_of_range += 1
                continue
            rep.per_bin_gt[b] += 1
            same = [d for d in dets if d.class_name == g.class_name]
            if not same:
                rep.unmatched += 1
                continue
            iou = _iou(same, [g], mode)[:, 0]
            best = int(np.argmax(iou))
            if iou[best] < iou_threshold:
                rep.unmatched += 1
                continue
            rep.sum_abs[b] += abs(same[best].depth - g.depth)
            rep.counts[b] += 1
    return rep
