"""Unsupervised heterogeneous change detection.

Two co-registered images from different sensors are compared through a
patch-affinity prior, a self-selected training set of likely unchanged
pixels, regression of each image into the other's modality, and a
filtered, thresholded fusion of the two prediction residuals.
"""

from .affinity import possibility_map
from .core import ConfusionCounts, PatchSpec, TrainingSet, patch_anchors
from .detection import FilterConfig, MetricsReport, otsu_threshold, score
from .pipeline import ChangeDetector
from .regression import (
    MSVR,
    GPRegressor,
    HPTRegressor,
    KernelMemoryError,
    RandomForest,
    make_regressor,
    regress_both_ways,
)
from .selection import hellinger, hellinger_multichannel, select_training
from .synth import SynthConfig, generate_pair

__version__ = "0.1.0"

__all__ = [
    "ChangeDetector",
    "ConfusionCounts",
    "FilterConfig",
    "GPRegressor",
    "HPTRegressor",
    "KernelMemoryError",
    "MSVR",
    "MetricsReport",
    "PatchSpec",
    "RandomForest",
    "SynthConfig",
    "TrainingSet",
    "generate_pair",
    "hellinger",
    "hellinger_multichannel",
    "make_regressor",
    "otsu_threshold",
    "patch_anchors",
    "possibility_map",
    "regress_both_ways",
    "score",
    "select_training",
]
