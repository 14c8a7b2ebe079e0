"""Self-supervised training set selection and its representativeness check."""

import warnings
from dataclasses import dataclass

import numpy as np

from .core import TrainingSet
from .validation import check_image_pair, check_mask, check_scores

DEFAULT_BINS = 100
DEFAULT_WARN_THRESHOLD = 0.5


class RepresentativenessWarning(UserWarning):
    """The training pixels' histogram is far from the full image's."""


def select_training(scores, image_x, image_y, M):
    """Pair up the ``M`` pixels with the lowest change possibility.

    Ties are broken by ascending row-major pixel index.
    """
    image_x, image_y = check_image_pair(image_x, image_y)
    scores = check_scores(scores, image_x.shape[:2], "scores")
    n = scores.size
    M = int(M)
    if M > n:
        raise ValueError(f"training size exceeds pixel count: M={M}, N={n}")
    if M < 1:
        raise ValueError("M must be at least 1")
    indices = np.argsort(scores.ravel(), kind="stable")[:M]
    return TrainingSet.from_images(image_x, image_y, np.sort(indices))


def _check_histogram(h, name):
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1 or h.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D histogram")
    if np.any(h < 0) or abs(h.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} is not normalized: sum={h.sum():.12g}")
    return h


def bhattacharyya(h_a, h_b):
    h_a = _check_histogram(h_a, "h_a")
    h_b = _check_histogram(h_b, "h_b")
    if h_a.shape != h_b.shape:
        raise ValueError("histograms have different bin counts")
    return float(np.sum(np.sqrt(h_a * h_b)))


def _from_coefficient(bc):
    # rounding can push the coefficient slightly above 1
    return float(np.sqrt(max(0.0, 1.0 - bc)))


def hellinger(h_a, h_b):
    """Hellinger distance between two normalized histograms on shared bins."""
    return _from_coefficient(bhattacharyya(h_a, h_b))


def channel_histograms(values, edges):
    """Normalized histogram of each column of ``values`` over its own edges."""
    hists = []
    for c, e in enumerate(edges):
        counts, _ = np.histogram(values[:, c], bins=e)
        hists.append(counts / counts.sum())
    return hists


def histogram_edges(image, num_bins=DEFAULT_BINS):
    """Per-channel edges spanning the full image range.

    A constant channel gets the unit interval around its value so the edges
    stay strictly increasing.
    """
    if num_bins < 2:
        raise ValueError("num_bins must be at least 2")
    flat = image.reshape(-1, image.shape[-1])
    edges = []
    for lo, hi in zip(flat.min(axis=0), flat.max(axis=0)):
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        edges.append(np.linspace(lo, hi, num_bins + 1))
    return edges


def hellinger_multichannel(image, indices, num_bins=DEFAULT_BINS):
    """Hellinger distance between the full image and its pixel subset.

    The Bhattacharyya coefficient is averaged over channels before taking
    ``sqrt(1 - bc)``.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    indices = np.asarray(indices, dtype=np.int64).ravel()
    if indices.size == 0:
        raise ValueError("empty subset")
    flat = image.reshape(-1, image.shape[-1])
    edges = histogram_edges(image, num_bins)
    full = channel_histograms(flat, edges)
    sub = channel_histograms(flat[indices], edges)
    return hellinger_channels(full, sub)


def hellinger_channels(hists_a, hists_b):
    """Hellinger distance from per-channel histogram lists, coefficient averaged."""
    if len(hists_a) != len(hists_b) or not hists_a:
        raise ValueError("need the same, non-zero number of channel histograms")
    bc = np.mean([bhattacharyya(a, b) for a, b in zip(hists_a, hists_b)])
    return _from_coefficient(bc)


@dataclass(frozen=True)
class SelectionReport:
    training_set: TrainingSet
    dH_x: float
    dH_y: float
    fn_fraction: float | None = None

    def to_dict(self):
        out = {"d_h_x": self.dH_x, "d_h_y": self.dH_y}
        if self.fn_fraction is not None:
            out["fn_fraction"] = self.fn_fraction
        return out


def select_with_report(scores, image_x, image_y, M, num_bins=DEFAULT_BINS,
                       truth=None, warn_threshold=DEFAULT_WARN_THRESHOLD):
    """Select the training set and compute its Hellinger diagnostics.

    ``truth`` is an optional change mask used only to report the fraction
    of selected pixels that are actually changed. A warning is issued when
    either distance exceeds ``warn_threshold``; the selection is unaffected.
    """
    image_x, image_y = check_image_pair(image_x, image_y)
    ts = select_training(scores, image_x, image_y, M)
    dx = hellinger_multichannel(image_x, ts.indices, num_bins)
    dy = hellinger_multichannel(image_y, ts.indices, num_bins)
    fn = None
    if truth is not None:
        truth = check_mask(truth, image_x.shape[:2])
        fn = float(truth.ravel()[ts.indices].mean())
    if max(dx, dy) > warn_threshold:
        warnings.warn(
            f"training set may not represent the images: d_H = {dx:.3f} (X), "
            f"{dy:.3f} (Y) above {warn_threshold}",
            RepresentativenessWarning,
            stacklevel=2,
        )
    return SelectionReport(ts, dx, dy, fn)
