"""Soft-NMS on BEV IoU followed by density-based score activation.

Soft-NMS repeatedly takes the best remaining box ``M`` and decays every other
remaining box by ``exp(-iou(M, b)**2 / sigma)``. Afterwards each survivor is
boosted by ``2 - exp(-density / gamma)``, where ``density`` is the sum of
squared IoUs against every *other* box of the original, pre-NMS set. A box
predicted repeatedly (e.g. by several depth strata) therefore gains score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .geometry import bev_iou_matrix, object_footprints
from .kitti_io import Detection


@dataclass(frozen=True)
class NmsParams:
    sigma: float = 0.9
    gamma: float = 20.0
    score_floor: float = 0.01

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 <= self.score_floor <= 1.0:
            raise ValueError(f"score_floor must lie in [0, 1], got {self.score_floor}")


@dataclass(frozen=True)
class ScoredBox:
    detection: Detection
    score: float
    index: int  # position in the pre-NMS set


def decay_factor(iou, sigma: float):
    return np.exp(-np.square(iou) / sigma)


def activation_factor(density, gamma: float):
    return 2.0 - np.exp(-np.asarray(density, dtype=float) / gamma)


def density(iou: np.ndarray) -> np.ndarray:
    """Row sums of squared IoU with the diagonal (self-overlap) excluded."""
    sq = np.square(np.asarray(iou, dtype=float))
    return sq.sum(axis=1) - np.diagonal(sq)


def _order(scores, dens, index):
    # descending score, then higher density, then lower input index
    return np.lexsort((index, -dens, -scores))


def soft_nms_scores(iou: np.ndarray, scores: np.ndarray, sigma: float, score_floor: float,
                    dens: Optional[np.ndarray] = None):
    """Index-level soft-NMS. Returns ``(kept indices in selection order, final scores)``."""
    scores = np.array(scores, dtype=float)
    n = scores.size
    if dens is None:
        dens = density(iou) if n else np.zeros(0)
    idx = np.arange(n)
    alive = scores >= score_floor
    kept = []
    while alive.any():
        cand = np.flatnonzero(alive)
        m = cand[_order(scores[cand], dens[cand], idx[cand])[0]]
        kept.append(int(m))
        alive[m] = False
        rest = np.flatnonzero(alive)
        if rest.size == 0:
            break
        scores[rest] *= decay_factor(iou[m, rest], sigma)
        alive[rest[scores[rest] < score_floor]] = False
    return np.array(kept, dtype=int), scores


def _iou_of(boxes: Sequence[ScoredBox]) -> np.ndarray:
    poly = object_footprints([b.detection for b in boxes])
    return bev_iou_matrix(poly, poly)


def soft_nms(boxes: Sequence[ScoredBox], params: NmsParams = NmsParams(), iou: np.ndarray = None) -> List[ScoredBox]:
    """Decay overlapping boxes; drop those under ``score_floor``; sort by final score."""
    if not boxes:
        return []
    if iou is None:
        iou = _iou_of(boxes)
    scores = np.array([b.score for b in boxes], dtype=float)
    dens = density(iou)
    kept, final = soft_nms_scores(iou, scores, params.sigma, params.score_floor, dens)
    order = kept[_order(final[kept], dens[kept], kept)]
    return [ScoredBox(boxes[i].detection, float(final[i]), boxes[i].index) for i in order]


def density_activate(boxes: Sequence[ScoredBox], all_boxes: Sequence[ScoredBox],
                     params: NmsParams = NmsParams(), iou: np.ndarray = None) -> List[ScoredBox]:
    """Boost each box by ``2 - exp(-sum_b iou(box, b)**2 / gamma)`` over ``all_boxes``.

    A member of ``all_boxes`` with the same ``index`` as the box is the box
    itself and is left out of its sum. ``iou`` may supply the precomputed
    ``all_boxes`` IoU matrix, rows and columns indexed by ``ScoredBox.index``.
    """
    if not boxes:
        return []
    if iou is None:
        poly_b = object_footprints([b.detection for b in boxes])
        poly_all = object_footprints([b.detection for b in all_boxes])
        rows = bev_iou_matrix(poly_b, poly_all)
        self_mask = np.array([[b.index == a.index for a in all_boxes] for b in boxes], dtype=bool)
    else:
        cols = np.array([a.index for a in all_boxes], dtype=int)
        rows = iou[np.ix_([b.index for b in boxes], cols)]
        self_mask = np.array([b.index for b in boxes])[:, None] == cols[None, :]
    dens = np.where(self_mask, 0.0, np.square(rows)).sum(axis=1)
    factor = activation_factor(dens, params.gamma)
    return [ScoredBox(b.detection, float(b.score * f), b.index) for b, f in zip(boxes, factor)]


def pipeline(detections: Sequence[Detection], params: NmsParams = NmsParams(),
             top_k: Optional[int] = None, per_class: bool = True) -> List[Detection]:
    """Soft-NMS, then density activation, then a final descending sort.

    Classes are processed independently unless ``per_class`` is False. Ties
    in the final order go to the denser box, then the earlier input.
    """
    dets = list(detections)
    if not dets:
        return []
    groups: Dict[str, List[int]] = {}
    for i, d in enumerate(dets):
        groups.setdefault(d.class_name if per_class else "", []).append(i)
    out = []  # (score, density, input index, detection)
    for key in sorted(groups):
        members = groups[key]
        boxes = [ScoredBox(dets[i], float(dets[i].score), k) for k, i in enumerate(members)]
        iou = _iou_of(boxes)
        dens = density(iou)
        survivors = soft_nms(boxes, params, iou)
        activated = density_activate(survivors, boxes, params, iou)
        out.extend((b.score, dens[b.index], members[b.index], b.detection) for b in activated)
    out.sort(key=lambda t: (-t[0], -t[1], t[2]))
    if top_k is not None:
        out = out[:top_k]
    return [d.with_score(s) for s, _, _, d in out]
