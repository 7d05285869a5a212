import numpy as np
import pytest

from stratdet.kitti_io import CameraCalib, Detection, GroundTruthObject

KITTI_P2 = ("P2: 7.215377000000e+02 0.000000000000e+00 6.095593000000e+02 4.485728000000e+01 "
            "0.000000000000e+00 7.215377000000e+02 1.728540000000e+02 2.163791000000e-01 "
            "0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 2.745884000000e-03")


@pytest.fixture
def calib():
    return CameraCalib(f_u=721.5377, f_v=721.5377, c_u=609.5593, c_v=172.854)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_object(x=0.0, y=1.6, z=20.0, h=1.5, w=1.6, l=3.9, ry=0.0, bbox=(500.0, 150.0, 600.0, 220.0),
                cls="Car", trunc=0.0, occ=0, alpha=0.0):
    return GroundTruthObject(class_name=cls, truncation=trunc, occlusion=occ, alpha_obs=alpha,
                             bbox2d=tuple(bbox), size3d=(h, w, l), center3d=(x, y, z), rotation_y=ry)


def as_detection(obj, score=1.0):
    return Detection(score=score, **obj.__dict__)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
