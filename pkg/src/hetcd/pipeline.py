"""The complete detector: prior, self-selection, two-way regression, detection."""

import time
from contextlib import contextmanager

from sklearn.base import BaseEstimator

from .affinity import possibility_map
from .core import PatchSpec
from .detection import (
    FilterConfig,
    clip_normalize,
    distance_image,
    fuse,
    meanfield_filter,
    otsu_threshold,
    score,
)
from .regression import make_regressor, regress_both_ways
from .selection import DEFAULT_BINS, select_with_report
from .validation import check_image_pair


class ChangeDetector(BaseEstimator):
    """Unsupervised change detection between two images from different sensors.

    ``fit(image_x, image_y)`` runs every stage and stores the intermediate
    maps; the binary result is ``change_map_``.

    Parameters
    ----------
    k, delta : int
        Patch side and stride of the affinity prior.
    n_train : int
        Number of lowest-prior pixels used as training pairs.
    regressor : {"gpr", "svr", "rfr", "hpt"}
    regressor_params : dict, optional
        Overrides of the regressor defaults.
    filter_iterations, kernel_width, spatial_radius, spatial_sigma, boundary
        Mean-field filter settings, see :class:`~hetcd.detection.FilterConfig`.
    num_sigma : float
        Distance images are clipped at ``mean + num_sigma * std``.
    num_bins : int
        Histogram bins of the Hellinger diagnostic.

    Attributes
    ----------
    possibility_ : ndarray (n1, n2)
    selection_ : SelectionReport
    training_set_ : TrainingSet
    y_hat_, x_hat_ : ndarray
        Each image predicted from the other.
    distance_x_, distance_y_ : ndarray (n1, n2)
        Clip-normalized distance images.
    fused_, filtered_ : ndarray (n1, n2)
    threshold_ : float or None
    change_map_ : ndarray of bool (n1, n2)
    timings_ms_ : dict
        Wall-clock milliseconds per stage.
    """

    def __init__(self, k=10, delta=1, n_train=1000, regressor="rfr",
                 regressor_params=None, filter_iterations=5, kernel_width=0.1,
                 spatial_radius=8, spatial_sigma=4.0, boundary="renormalize",
                 num_sigma=4.0, num_bins=DEFAULT_BINS):
        self.k = k
        self.delta = delta
        self.n_train = n_train
        self.regressor = regressor
        self.regressor_params = regressor_params
        self.filter_iterations = filter_iterations
        self.kernel_width = kernel_width
        self.spatial_radius = spatial_radius
        self.spatial_sigma = spatial_sigma
        self.boundary = boundary
        self.num_sigma = num_sigma
        self.num_bins = num_bins

    @contextmanager
    def _stage(self, name):
        start = time.perf_counter()
        yield
        self.timings_ms_[name] = 1000.0 * (time.perf_counter() - start)

    def fit(self, image_x, image_y, truth=None):
        """Run the pipeline. ``truth`` only feeds the selection diagnostics."""
        image_x, image_y = check_image_pair(image_x, image_y)
        spec = PatchSpec(self.k, self.delta)
        filter_config = FilterConfig(
            self.filter_iterations, self.kernel_width, self.spatial_radius,
            self.spatial_sigma, self.boundary,
        )
        estimator = make_regressor(self.regressor, **(self.regressor_params or {}))
        self.timings_ms_ = {}
        with self._stage("prior"):
            self.possibility_ = possibility_map(image_x, image_y, spec)
        with self._stage("select"):
            self.selection_ = select_with_report(
                self.possibility_, image_x, image_y, self.n_train, self.num_bins, truth
            )
        self.training_set_ = self.selection_.training_set
        with self._stage("regress"):
            result = regress_both_ways(image_x, image_y, self.training_set_, estimator)
        self.y_hat_, self.x_hat_ = result.y_hat, result.x_hat
        self.forward_, self.backward_ = result.forward, result.backward
        with self._stage("detect"):
            self.distance_x_ = clip_normalize(distance_image(image_x, self.x_hat_), self.num_sigma)
            self.distance_y_ = clip_normalize(distance_image(image_y, self.y_hat_), self.num_sigma)
            self.fused_ = fuse(self.distance_x_, self.distance_y_)
            self.filtered_ = meanfield_filter(self.fused_, image_x, image_y, filter_config)
            self.threshold_, self.change_map_ = otsu_threshold(self.filtered_)
        return self

    def fit_predict(self, image_x, image_y):
        return self.fit(image_x, image_y).change_map_

    def evaluate(self, truth):
        """Metrics of the fitted change map, with AUC of the filtered scores."""
        if not hasattr(self, "change_map_"):
            raise AttributeError("ChangeDetector is not fitted")
        return score(self.change_map_, truth, self.filtered_, self.threshold_)

    def report(self, truth=None):
        """JSON-ready summary: stage timings, selection and detection results."""
        detection = {"threshold": self.threshold_}
        if truth is not None:
            metrics = self.evaluate(truth).to_dict()
            detection.update(metrics)
        else:
            # confusion counts need ground truth; keep the keys, null values
            detection.update({"tp": None, "tn": None, "fp": None, "fn": None})
        return {
            "stage_timings_ms": dict(self.timings_ms_),
            "selection": self.selection_.to_dict(),
            "detection": detection,
        }

