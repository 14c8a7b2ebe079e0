"""Cross-sensor regressors and the two-way image regression step."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import clone

from ..validation import check_image_pair
from .base import DEFAULT_MAX_KERNEL_SAMPLES, KernelMemoryError
from .forest import RandomForest
from .gpr import GPRegressor, SingularKernelError
from .hpt import HPTRegressor
from .svr import MSVR

KINDS = {
    "gpr": GPRegressor,
    "svr": MSVR,
    "rfr": RandomForest,
    "hpt": HPTRegressor,
}


def make_regressor(kind, **params):
    """Unfitted estimator of the given kind; unset parameters keep their defaults."""
    try:
        cls = KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown regressor kind {kind!r}, expected one of {sorted(KINDS)}") from None
    return cls(**params)


def kind_of(estimator):
    for kind, cls in KINDS.items():
        if type(estimator) is cls:
            return kind
    raise TypeError(f"not a known regressor: {type(estimator).__name__}")


@dataclass
class TwoWayResult:
    """Predictions of each image in the other's modality, with the fitted maps."""

    y_hat: np.ndarray
    x_hat: np.ndarray
    forward: object
    backward: object


def regress_both_ways(image_x, image_y, training_set, estimator):
    """Fit ``X -> Y`` and ``Y -> X`` on the training pixels and predict every pixel.

    ``estimator`` is an unfitted regressor used as a template; each direction
    fits its own clone.
    """
    image_x, image_y = check_image_pair(image_x, image_y)
    n1, n2, p = image_x.shape
    q = image_y.shape[2]
    if training_set.x.shape[1] != p or training_set.y.shape[1] != q:
        raise ValueError("training set channels do not match the images")
    if training_set.indices.max() >= n1 * n2:
        raise ValueError("training pixel index outside the image")
    forward = clone(estimator).fit(training_set.x, training_set.y)
    backward = clone(estimator).fit(training_set.y, training_set.x)
    y_hat = forward.predict(image_x.reshape(-1, p)).reshape(n1, n2, q)
    x_hat = backward.predict(image_y.reshape(-1, q)).reshape(n1, n2, p)
    return TwoWayResult(y_hat, x_hat, forward, backward)


__all__ = [
    "DEFAULT_MAX_KERNEL_SAMPLES",
    "GPRegressor",
    "HPTRegressor",
    "KINDS",
    "KernelMemoryError",
    "MSVR",
    "RandomForest",
    "SingularKernelError",
    "TwoWayResult",
    "kind_of",
    "make_regressor",
    "regress_both_ways",
]
