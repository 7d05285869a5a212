"""Depth-stratified monocular 3D detection toolkit.

KITTI I/O, camera geometry, depth stratification and target assignment,
box coding, losses with analytic gradients, density soft-NMS and AP
evaluation. Everything here is independent of any neural network.
"""

__version__ = "0.1.0"

from .errors import DomainError, KittiParseError, StratDetError
from .kitti_io import CameraCalib, Detection, GroundTruthObject

__all__ = [
    "CameraCalib",
    "Detection",
    "DomainError",
    "GroundTruthObject",
    "KittiParseError",
    "StratDetError",
    "__version__",
]
