"""Training losses with analytic gradients.

Every elementary loss works elementwise on scalars or arrays, returns the
summed value and the gradient with respect to the *predicted* inputs, shaped
like those inputs.

Score channels (confidence, center-ness, BEV IoU) use Quality Focal Loss;
location and size use L2; the angle uses a heading-weighted offset loss.
Two older angle losses are kept for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Dict, Sequence

import numpy as np

from .errors import DomainError
from .evaluate import Difficulty, classify_difficulty
from .geometry import bev_corners, bev_iou_matrix, fold_beta
from .stratify import NEGATIVE

CONFIDENCE_TARGETS = {
    Difficulty.EASY: 1.0,
    Difficulty.MODERATE: 0.8,
    Difficulty.HARD: 0.6,
    Difficulty.UNKNOWN: 0.4,
}


@dataclass
class LossValue:
    value: float
    grad: object  # ndarray, or a dict of ndarrays for the combined loss
    parts: Dict[str, float] = field(default_factory=dict)


def _arr(x):
    return np.asarray(x, dtype=float)


def angle_loss_mds(theta, theta_hat, alpha, alpha_hat) -> LossValue:
    """``(theta - theta_hat)**2 + (alpha - alpha_hat)**2 * sin(2 theta)``.

    The heading term is weighted by ``sin(2 theta)`` so a wrong heading costs
    most at 45 degrees and nothing at 0 or 90 degrees, where flipping the
    heading leaves the footprint unchanged. ``grad[..., 0]`` is d/dtheta_hat
    and ``grad[..., 1]`` is d/dalpha_hat.
    """
    theta, theta_hat, alpha, alpha_hat = np.broadcast_arrays(
        _arr(theta), _arr(theta_hat), _arr(alpha), _arr(alpha_hat))
    dt = theta - theta_hat
    da = alpha - alpha_hat
    weight = np.sin(2.0 * theta)
    value = dt ** 2 + da ** 2 * weight
    grad = np.stack([-2.0 * dt, -2.0 * da * weight], axis=-1)
    return LossValue(float(value.sum()), grad)


def smooth_l1(x, beta: float = 1.0):
    """Value and derivative of SmoothL1 with transition point ``beta``."""
    x = _arr(x)
    ax = np.abs(x)
    small = ax < beta
    val = np.where(small, 0.5 * x ** 2 / beta, ax - 0.5 * beta)
    der = np.where(small, x / beta, np.sign(x))
    return val, der


def angle_loss_second(beta, beta_hat) -> LossValue:
    """SmoothL1 of ``sin(beta - beta_hat)``.

    Its gradient vanishes at a 90 degree error even though the loss peaks there.
    """
    d = _arr(beta) - _arr(beta_hat)
    val, der = smooth_l1(np.sin(d))
    return LossValue(float(val.sum()), -der * np.cos(d))


def angle_loss_naive(beta, beta_hat) -> LossValue:
    """Plain squared radian offset."""
    d = _arr(beta) - _arr(beta_hat)
    return LossValue(float((d ** 2).sum()), -2.0 * d)


def qfl(prediction, target, beta_exponent: float = 2.0) -> LossValue:
    """Quality Focal Loss ``-|t - p|**b * [(1 - t) log(1 - p) + t log p]``.

    Raises
    ------
    DomainError
        If any prediction lies outside the open interval (0, 1).
    """
    p, t = np.broadcast_arrays(_arr(prediction), _arr(target))
    if np.any((p <= 0.0) | (p >= 1.0)) or np.any(~np.isfinite(p)):
        raise DomainError("QFL prediction must lie strictly inside (0, 1)")
    d = t - p
    ad = np.abs(d)
    mod = ad ** beta_exponent
    bce = -((1.0 - t) * np.log1p(-p) + t * np.log(p))
    with np.errstate(divide="ignore", invalid="ignore"):
        dmod = np.where(ad > 0, -beta_exponent * ad ** (beta_exponent - 1.0) * np.sign(d), 0.0)
    dbce = (1.0 - t) / (1.0 - p) - t / p
    return LossValue(float((mod * bce).sum()), dmod * bce + mod * dbce)


def l2_loss(predicted, target) -> LossValue:
    p, t = _arr(predicted), _arr(target)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    d = p - t
    return LossValue(float((d ** 2).sum()), 2.0 * d)


@dataclass
class HeadOutputs:
    """Dense per-cell values for one feature level, predictions or targets.

    ``loc`` holds (u_hat, v_hat, z_hat) and ``size`` (w_hat, l_hat, h_hat) on
    the last axis; the rest are (rows, cols) grids.
    """

    confidence: np.ndarray
    centerness: np.ndarray
    iou: np.ndarray
    loc: np.ndarray
    size: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray

    @property
    def shape(self):
        return np.shape(self.confidence)


SCORE_CHANNELS = ("confidence", "centerness", "iou")


def total_loss(pred: HeadOutputs, target: HeadOutputs, labels: np.ndarray,
               qfl_exponent: float = 2.0) -> LossValue:
    """Classification loss plus 3D box loss over one level, unit weights.

    Positive cells (``labels >= 0``) contribute QFL on the three score
    channels against their targets plus L2 on location and size and the
    heading-weighted angle loss. Negative cells contribute QFL against a zero
    target on the score channels. Ignored cells contribute nothing, whatever
    they hold. The gradient is a dict keyed like :class:`HeadOutputs`.
    """
    labels = np.asarray(labels)
    shape = labels.shape
    for f in fields(HeadOutputs):
        for src in (pred, target):
            arr = np.asarray(getattr(src, f.name))
            if arr.shape[:2] != shape:
                raise ValueError(f"{f.name} has shape {arr.shape}, labels {shape}")
    pos = labels >= 0
    neg = labels == NEGATIVE
    used = pos | neg
    grads = {f.name: np.zeros(np.shape(getattr(pred, f.name))) for f in fields(HeadOutputs)}
    parts = {}

    l_c = 0.0
    for name in SCORE_CHANNELS:
        p = np.asarray(getattr(pred, name), dtype=float)
        t = np.where(pos, np.asarray(getattr(target, name), dtype=float), 0.0)
        lv = qfl(p[used], t[used], qfl_exponent)
        grads[name][used] = lv.grad
        parts[name] = lv.value
        l_c += lv.value

    loc = l2_loss(np.asarray(pred.loc)[pos], np.asarray(target.loc)[pos])
    size = l2_loss(np.asarray(pred.size)[pos], np.asarray(target.size)[pos])
    ang = angle_loss_mds(np.asarray(target.theta)[pos], np.asarray(pred.theta)[pos],
                         np.asarray(target.alpha)[pos], np.asarray(pred.alpha)[pos])
    grads["loc"][pos] = loc.grad
    grads["size"][pos] = size.grad
    grads["theta"][pos] = ang.grad[..., 0]
    grads["alpha"][pos] = ang.grad[..., 1]
    parts.update(loc=loc.value, size=size.value, angle=ang.value)
    l_3d = loc.value + size.value + ang.value
    parts.update(classification=l_c, box3d=l_3d)
    return LossValue(l_c + l_3d, grads, parts)


def confidence_target(obj) -> float:
    """Piecewise confidence target by KITTI difficulty: 1.0/0.8/0.6, 0.4 for the rest."""
    return CONFIDENCE_TARGETS[classify_difficulty(obj)]


def centerness_target(cell_xy: Sequence[float], bbox2d: Sequence[float]) -> float:
    """``1 - d / d_max`` clamped to [0, 1].

    ``d`` is the distance from the cell centre to the 2D box centre and
    ``d_max`` the box's half diagonal.
    """
    left, top, right, bottom = bbox2d
    cx, cy = 0.5 * (left + right), 0.5 * (top + bottom)
    d_max = 0.5 * math.hypot(right - left, bottom - top)
    if d_max <= 0:
        return 0.0
    d = math.hypot(cell_xy[0] - cx, cell_xy[1] - cy)
    return min(max(1.0 - d / d_max, 0.0), 1.0)


def score_targets(objects, labels: np.ndarray, stride: int):
    """Confidence and center-ness target grids for the positive cells of ``labels`` (0 elsewhere)."""
    conf = np.zeros(labels.shape)
    ctr = np.zeros(labels.shape)
    for r, c in zip(*np.nonzero(labels >= 0)):
        o = objects[labels[r, c]]
        conf[r, c] = confidence_target(o)
        ctr[r, c] = centerness_target(((c + 0.5) * stride, (r + 0.5) * stride), o.bbox2d)
    return conf, ctr


def heading_flip_curves(thetas, width: float = 1.6, length: float = 3.9) -> Dict[str, np.ndarray]:
    """Angle losses and footprint IoU when only the heading is wrong.

    For each true offset ``theta`` the prediction has the same offset but the
    opposite heading (``beta_hat = -beta``). Returns the three losses and
    the BEV IoU between the true and predicted footprints of a reference box.
    """
    thetas = _arr(thetas)
    beta, beta_hat = thetas, -thetas
    zeros = np.zeros_like(thetas)
    mds = np.array([angle_loss_mds(t, t, 1.0, 0.0).value for t in thetas])
    second = np.array([angle_loss_second(b, bh).value for b, bh in zip(beta, beta_hat)])
    naive = np.array([angle_loss_naive(b, bh).value for b, bh in zip(beta, beta_hat)])
    a = bev_corners(zeros, zeros, width, length, beta)
    b = bev_corners(zeros, zeros, width, length, beta_hat)
    iou = np.array([bev_iou_matrix(a[i], b[i])[0, 0] for i in range(thetas.size)])
    return {"theta": thetas, "naive": naive, "second": second, "mds": mds, "iou": iou}


def offset_curves(theta_true: float, deltas, width: float = 1.6, length: float = 3.9) -> Dict[str, np.ndarray]:
    """Losses and IoU for predictions ``beta_hat = beta + delta`` at fixed true ``beta = theta_true``.

    The heading-weighted loss sees both angles folded into (-pi/2, pi/2].
    """
    deltas = _arr(deltas)
    beta = float(theta_true)
    bh = beta + deltas
    true = fold_beta(beta)
    folded = [fold_beta(b) for b in bh]
    mds = np.array([angle_loss_mds(true.theta, f.theta, true.alpha_bit, f.alpha_bit).value for f in folded])
    second = np.array([angle_loss_second(beta, b).value for b in bh])
    naive = np.array([angle_loss_naive(beta, b).value for b in bh])
    zeros = np.zeros_like(deltas)
    ref = bev_corners(0.0, 0.0, width, length, beta)[0]
    other = bev_corners(zeros, zeros, width, length, bh)
    iou = bev_iou_matrix(ref, other)[0]
    return {"delta": deltas, "naive": naive, "second": second, "mds": mds, "iou": iou}
