"""Canonical pose estimation for 3D point clouds, with flip prediction sets."""

from .estimators import AdaptivePredictionSets, Flipper, OrientationPipeline, QuotientOrienter
from .exceptions import SymorientError

__all__ = ["AdaptivePredictionSets", "Flipper", "OrientationPipeline", "QuotientOrienter",
           "SymorientError"]
__version__ = "0.1.0"
