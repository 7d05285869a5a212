import math

import numpy as np
import pytest

from stratdet.errors import DomainError
from stratdet.geometry import project_box_2d
from stratdet.stratify import (IGNORE, NEGATIVE, StratConfig, StratLevel, assign_targets, default_config,
                               depth_from_2d_size, fit_curve_points, grid_shape, level_histogram,
                               levels_for_depth)

from conftest import make_object

FACING = math.pi / 2  # length along the viewing axis


def test_default_levels():
    cfg = default_config()
    assert [(l.stride, l.z_min, l.z_max) for l in cfg.levels] == [(8, 5, 20), (16, 10, 40), (32, 20, 80)]
    assert (cfg.z_lo, cfg.z_hi) == (5, 80)


def test_geometric_growth():
    lv = default_config().levels
    for a, b in zip(lv, lv[1:]):
        assert b.z_min == 2 * a.z_min
        assert b.stride == 2 * a.stride
    for l in lv:
        assert l.z_max / l.z_min == 4


@pytest.mark.parametrize("z, expected", [(15, {0, 1}), (25, {1, 2}), (3, set()), (5, {0}), (80, {2}),
                                         (80.01, set()), (20, {1, 2}), (10, {0, 1}), (40, {2})])
def test_levels_for_depth(z, expected):
    assert levels_for_depth(z) == expected


def test_overlap_property():
    for z in np.linspace(5, 80, 3001):
        hit = levels_for_depth(z)
        assert hit
        if 10 <= z < 40:
            assert len(hit) == 2


def test_config_validation():
    with pytest.raises(ValueError):
        StratLevel(0, 12, 5, 20)
    with pytest.raises(ValueError):
        StratLevel(0, 8, 20, 5)
    with pytest.raises(ValueError):
        StratConfig((StratLevel(0, 8, 5, 10), StratLevel(1, 16, 10, 80)), 5, 80)  # touching, no overlap


def test_depth_from_width_value(calib):
    assert depth_from_2d_size(80.0, (1.5, 1.6, 4.0), calib) == pytest.approx(16.4308, abs=1e-4)


def test_depth_limit_and_proportionality(calib):
    size = (1.5, 1.6, 4.0)
    assert depth_from_2d_size(1e12, size, calib) == pytest.approx(2.0, abs=1e-6)
    z1 = depth_from_2d_size(50.0, size, calib)
    z2 = depth_from_2d_size(100.0, size, calib)
    assert z2 - 2.0 == pytest.approx((z1 - 2.0) / 2, rel=1e-12)


def test_depth_bad_size(calib):
    with pytest.raises(DomainError):
        depth_from_2d_size(0.0, (1.5, 1.6, 4.0), calib)
    with pytest.raises(ValueError):
        depth_from_2d_size(10.0, (1.5, 1.6, 4.0), calib, axis="depth")


@pytest.mark.parametrize("z", np.linspace(5, 80, 31))
def test_depth_matches_projection_oracle(calib, z):
    size = (1.52, 1.63, 3.88)
    left, top, right, bottom = project_box_2d((0.0, 0.5 * size[0], z), size, FACING, calib)
    assert depth_from_2d_size(right - left, size, calib, "width") == pytest.approx(z, rel=0.02)
    assert depth_from_2d_size(bottom - top, size, calib, "height") == pytest.approx(z, rel=0.02)


def _frame_from_projection(calib, zs, size=(1.5, 1.6, 3.9)):
    objs = []
    for z in zs:
        ctr = (0.0, 0.5 * size[0], z)
        objs.append(make_object(x=0.0, y=ctr[1], z=z, h=size[0], w=size[1], l=size[2], ry=FACING,
                                bbox=project_box_2d(ctr, size, FACING, calib)))
    return objs


def test_fit_single_object(calib):
    objs = _frame_from_projection(calib, [20.0])
    fit = fit_curve_points([(objs, calib)])
    assert fit.scatter.shape == (1, 2)
    assert fit.curve.shape == (1, 2)
    assert fit.curve[0, 1] == pytest.approx(20.0, rel=1e-12)


def test_fit_synthetic_on_curve(calib):
    objs = _frame_from_projection(calib, np.linspace(5, 80, 40))
    fit = fit_curve_points([(objs, calib)])
    assert np.all(fit.relative_residuals() <= 0.02)
    assert np.all(np.diff(fit.curve[:, 1]) < 0)


def test_fit_empty():
    with pytest.raises(ValueError):
        fit_curve_points([])


IMG = (375, 1242)


def test_grid_shape():
    assert grid_shape(IMG, 8) == (47, 156)
    assert grid_shape(IMG, 32) == (12, 39)


def test_assign_empty_is_negative():
    lv = default_config().levels[0]
    labels = assign_targets([], lv, IMG)
    assert labels.shape == grid_shape(IMG, 8)
    assert np.all(labels == NEGATIVE)


def test_closest_object_wins():
    lv = default_config().levels[0]
    far = make_object(z=18.0, bbox=(100, 100, 300, 300))
    near = make_object(z=12.0, bbox=(200, 150, 400, 350))
    labels = assign_targets([far, near], lv, IMG)
    # cell centre (252, 204) lies in both boxes
    assert labels[204 // 8, 252 // 8] == 1
    # only in the far box
    assert labels[124 // 8, 124 // 8] == 0
    assert labels[0, 0] == NEGATIVE


def test_out_of_range_object_ignored():
    lv = default_config().levels[0]
    obj = make_object(z=50.0, bbox=(100, 100, 300, 300))
    labels = assign_targets([obj], lv, IMG)
    assert labels[204 // 8, 204 // 8] == IGNORE
    assert labels[0, 0] == NEGATIVE
    assert not np.any(labels >= 0)


def test_outside_global_range_and_dontcare_ignored():
    lv = default_config().levels[2]
    near = make_object(z=3.0, bbox=(0, 0, 100, 100))
    dc = make_object(cls="DontCare", z=-1000.0, h=-1, w=-1, l=-1, bbox=(600, 100, 700, 200))
    labels = assign_targets([near, dc], lv, IMG)
    assert labels[1, 1] == IGNORE
    assert labels[150 // 32, 650 // 32] == IGNORE


def test_positive_beats_ignore():
    lv = default_config().levels[0]
    out_near = make_object(z=3.0, bbox=(100, 100, 300, 300))
    inside = make_object(z=15.0, bbox=(100, 100, 300, 300))
    labels = assign_targets([out_near, inside], lv, IMG)
    assert labels[200 // 8, 200 // 8] == 1


def test_positive_cells_are_exactly_covered_cells(rng):
    cfg = default_config()
    objs = []
    for a, b in zip(rng.uniform(0, 1000, 12), rng.uniform(0, 300, 12)):
        bbox = (a, b, a + rng.uniform(5, 300), b + rng.uniform(5, 150))
        objs.append(make_object(z=float(rng.uniform(2, 90)), bbox=tuple(map(float, bbox))))
    for lv in cfg.levels:
        labels = assign_targets(objs, lv, IMG, cfg)
        xs = (np.arange(labels.shape[1]) + 0.5) * lv.stride
        ys = (np.arange(labels.shape[0]) + 0.5) * lv.stride
        for r, y in enumerate(ys):
            for c, x in enumerate(xs):
                cover = [i for i, o in enumerate(objs)
                         if o.bbox2d[0] <= x <= o.bbox2d[2] and o.bbox2d[1] <= y <= o.bbox2d[3]]
                inr = [i for i in cover if cfg.in_level(objs[i].depth, lv)]
                if inr:
                    assert labels[r, c] == min(inr, key=lambda i: (objs[i].depth, i))
                elif cover:
                    assert labels[r, c] == IGNORE
                else:
                    assert labels[r, c] == NEGATIVE


def test_level_histogram():
    objs = [make_object(z=z) for z in (3, 7, 15, 25, 60, 90)]
    h = level_histogram(objs)
    assert h == {0: 2, 1: 2, 2: 2, None: 2}
