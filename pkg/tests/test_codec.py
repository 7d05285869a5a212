import math

import numpy as np
import pytest

from stratdet.codec import (GridCell, PresetSize, RawPrediction, decode, decode_arrays, decode_feature_map,
                            encode, encode_targets, preset_from_dataset, presets_from_dataset)
from stratdet.errors import DomainError
from stratdet.geometry import beta_from_rotation_y
from stratdet.stratify import assign_targets, default_config

from conftest import make_object

PRESET = PresetSize(w0=1.6, l0=3.9, h0=1.5)
LEVELS = default_config().levels


def zero_raw(**kw):
    base = dict(u_hat=0.0, v_hat=0.0, z_hat=0.0, w_hat=0.0, l_hat=0.0, h_hat=0.0, alpha_hat=1.0, theta_hat=0.0)
    base.update(kw)
    return RawPrediction(**base)


@pytest.mark.parametrize("z_hat, z", [(0, 5), (1, 10), (2, 20)])
def test_decode_depth_scaling(calib, z_hat, z):
    out = decode(zero_raw(z_hat=z_hat), GridCell(100.0, 100.0, LEVELS[0]), PRESET, calib)
    assert out.center3d[2] == z


def test_decode_preset_size(calib):
    out = decode(zero_raw(), GridCell(100.0, 100.0, LEVELS[1]), PRESET, calib)
    assert out.size3d == (1.5, 1.6, 3.9)


def test_decode_principal_point(calib):
    out = decode(zero_raw(z_hat=0.7), GridCell(calib.c_u, calib.c_v, LEVELS[2]), PRESET, calib)
    assert out.center3d[:2] == (0.0, 0.0)


def test_decode_heading_sign(calib):
    cell = GridCell(0.0, 0.0, LEVELS[0])
    assert decode(zero_raw(alpha_hat=1.0, theta_hat=0.3), cell, PRESET, calib).beta == 0.3
    assert decode(zero_raw(alpha_hat=0.0, theta_hat=0.3), cell, PRESET, calib).beta == -0.3
    assert decode(zero_raw(alpha_hat=0.2, theta_hat=0.3), cell, PRESET, calib).beta == -0.3


def test_encode_at_min_depth(calib):
    gt = make_object(x=1.0, z=LEVELS[0].z_min, w=1.6, l=3.9, h=1.5)
    raw = encode(gt, GridCell(300.0, 200.0, LEVELS[0]), PRESET, calib)
    assert raw.z_hat == 0.0
    assert (raw.w_hat, raw.l_hat, raw.h_hat) == (0.0, 0.0, 0.0)


def test_encode_behind_camera(calib):
    with pytest.raises(DomainError):
        encode(make_object(z=-3.0), GridCell(0.0, 0.0, LEVELS[0]), PRESET, calib)


def _random_gt(rng, level):
    z = rng.uniform(level.z_min, level.z_max)
    return make_object(x=rng.uniform(-0.6, 0.6) * z, y=rng.uniform(-1, 3), z=z, h=rng.uniform(0.5, 4),
                       w=rng.uniform(0.4, 3), l=rng.uniform(0.5, 12), ry=rng.uniform(-math.pi, math.pi))


def test_roundtrip_1000(calib, rng):
    worst = 0.0
    for i in range(1000):
        lv = LEVELS[i % 3]
        gt = _random_gt(rng, lv)
        cell = GridCell((rng.integers(0, 150) + 0.5) * lv.stride, (rng.integers(0, 45) + 0.5) * lv.stride, lv)
        out = decode(encode(gt, cell, PRESET, calib), cell, PRESET, calib)
        beta = beta_from_rotation_y(gt.rotation_y, gt.center3d).beta
        err = max(np.max(np.abs(np.subtract(out.center3d, gt.center3d))),
                  np.max(np.abs(np.subtract(out.size3d, gt.size3d))), abs(out.beta - beta))
        worst = max(worst, err)
    assert worst < 1e-9


def test_decoded_depth_spans_level():
    for lv in LEVELS:
        hi = math.log2(lv.z_max / lv.z_min)
        zs = lv.z_min * np.exp2(np.linspace(0, hi, 101))
        assert zs[0] == lv.z_min and zs[-1] == pytest.approx(lv.z_max, rel=1e-15)
        assert np.all(np.diff(zs) > 0)


def test_sizes_positive_for_extreme_logits(calib):
    raw = np.array([[0, 0, 0, -50, -50, -50, 1, 0.1], [0, 0, 0, 30, 30, 30, 0, 0.1]], dtype=float)
    _, sizes, _ = decode_arrays(raw, 10.0, 10.0, 5.0, PRESET, calib)
    assert np.all(sizes > 0)


def test_vectorized_matches_scalar(calib, rng):
    raw = rng.normal(size=(50, 8))
    raw[:, 6] = rng.integers(0, 2, 50)
    raw[:, 7] = rng.uniform(0, math.pi / 2, 50)
    xp, yp = rng.uniform(0, 1200, 50), rng.uniform(0, 370, 50)
    ctr, size, beta = decode_arrays(raw, xp, yp, LEVELS[1].z_min, PRESET, calib)
    for i in range(50):
        ref = decode(RawPrediction(*raw[i]), GridCell(xp[i], yp[i], LEVELS[1]), PRESET, calib)
        assert np.allclose(ctr[i], ref.center3d, rtol=1e-14, atol=1e-12)
        assert np.allclose(size[i], ref.size3d, rtol=1e-14)
        assert beta[i] == ref.beta


def test_preset_mean():
    objs = [make_object(w=1.5), make_object(w=1.7), make_object(cls="Pedestrian", w=0.6)]
    assert preset_from_dataset(objs, "Car").w0 == pytest.approx(1.6)
    one = preset_from_dataset(objs[:1], "Car")
    assert (one.w0, one.l0, one.h0) == (1.5, 3.9, 1.5)
    with pytest.raises(ValueError):
        preset_from_dataset(objs, "Cyclist")


def test_preset_independent_one_pass():
    rng = np.random.default_rng(7)
    objs = [make_object(h=rng.uniform(1, 2), w=rng.uniform(1, 2), l=rng.uniform(3, 5)) for _ in range(257)]
    sw = sl = sh = 0.0
    for o in objs:
        sh += o.size3d[0]
        sw += o.size3d[1]
        sl += o.size3d[2]
    p = preset_from_dataset(objs, "Car")
    n = len(objs)
    assert (p.w0, p.l0, p.h0) == pytest.approx((sw / n, sl / n, sh / n), rel=1e-12)


def test_presets_skip_dontcare():
    objs = [make_object(), make_object(cls="DontCare", h=-1, w=-1, l=-1)]
    assert list(presets_from_dataset(objs)) == ["Car"]


def test_encode_targets_and_feature_map_roundtrip(calib):
    lv = LEVELS[0]
    gt = make_object(x=1.0, y=1.6, z=12.0, ry=0.4, bbox=(600, 150, 700, 230))
    labels = assign_targets([gt], lv, (375, 1242))
    targets = encode_targets([gt], labels, lv, {"Car": PRESET}, calib)
    pos = labels >= 0
    assert pos.sum() > 0
    assert np.all(np.isnan(targets[~pos]))
    scores = np.where(pos, 0.9, 0.0)
    dets = decode_feature_map(np.nan_to_num(targets), scores, lv, PRESET, calib, "Car", threshold=0.5)
    assert len(dets) == pos.sum()
    for d in dets:
        assert np.allclose(d.center3d, gt.center3d, atol=1e-9)
        assert np.allclose(d.size3d, gt.size3d, atol=1e-9)
        assert math.cos(d.rotation_y - gt.rotation_y) == pytest.approx(1.0, abs=1e-12) or \
            math.cos(d.rotation_y - gt.rotation_y) == pytest.approx(-1.0, abs=1e-12)
