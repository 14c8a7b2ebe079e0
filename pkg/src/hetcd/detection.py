"""From original and predicted images to a scored binary change map."""

import warnings
from dataclasses import asdict, dataclass

import numba
import numpy as np
from scipy.stats import rankdata

from .affinity import normalize_minmax
from .core import ConfusionCounts
from .validation import check_image, check_image_pair, check_mask, check_scores


def distance_image(original, predicted):
    """Per-pixel Euclidean norm of ``original - predicted`` across channels."""
    original = check_image(original, "original")
    predicted = check_image(predicted, "predicted")
    if original.shape != predicted.shape:
        raise ValueError(
            f"original {original.shape} and predicted {predicted.shape} differ"
        )
    return np.sqrt(np.sum((original - predicted) ** 2, axis=2))


def clip_normalize(d, num_sigma=4.0):
    """Clip at ``mean + num_sigma * std`` and min-max scale to [0, 1]."""
    d = check_scores(d, name="distance map")
    ceiling = d.mean() + num_sigma * d.std()
    return normalize_minmax(np.minimum(d, ceiling))


def fuse(dx, dy):
    """Average of two normalized distance maps."""
    dx = check_scores(dx, name="dx")
    dy = check_scores(dy, shape=dx.shape, name="dy")
    return 0.5 * (dx + dy)


@dataclass(frozen=True)
class FilterConfig:
    """Mean-field smoothing settings.

    ``kernel_width`` is the Gaussian width in the min-max normalized feature
    space of the guide images; ``spatial_radius`` truncates the spatial
    Gaussian of width ``spatial_sigma`` (both in pixels).
    """

    iterations: int = 5
    kernel_width: float = 0.1
    spatial_radius: int = 8
    spatial_sigma: float = 4.0
    boundary: str = "renormalize"

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.kernel_width <= 0 or self.spatial_sigma <= 0:
            raise ValueError("kernel widths must be positive")
        if self.spatial_radius < 0:
            raise ValueError("spatial_radius must be >= 0")
        if self.boundary not in ("renormalize", "periodic"):
            raise ValueError("boundary must be 'renormalize' or 'periodic'")


def guide_features(image_x, image_y):
    """Concatenated channels of both images, each min-max scaled to [0, 1]."""
    x, y = check_image_pair(image_x, image_y)
    feats = np.concatenate([x, y], axis=2)
    lo = feats.min(axis=(0, 1))
    span = feats.max(axis=(0, 1)) - lo
    span[span == 0] = 1.0
    return (feats - lo) / span


@numba.njit(cache=True)
def _bilateral_pass(values, feats, radius, inv_2s2, inv_2k2, periodic):
    n1, n2 = values.shape
    nf = feats.shape[2]
    out = np.empty_like(values)
    for i in range(n1):
        for j in range(n2):
            acc = 0.0
            norm = 0.0
            for di in range(-radius, radius + 1):
                ii = i + di
                if periodic:
                    ii %= n1
                elif ii < 0 or ii >= n1:
                    continue
                for dj in range(-radius, radius + 1):
                    jj = j + dj
                    if periodic:
                        jj %= n2
                    elif jj < 0 or jj >= n2:
                        continue
                    fd = 0.0
                    for c in range(nf):
                        t = feats[i, j, c] - feats[ii, jj, c]
                        fd += t * t
                    w = np.exp(-(di * di + dj * dj) * inv_2s2 - fd * inv_2k2)
                    acc += w * values[ii, jj]
                    norm += w
            out[i, j] = acc / norm
    return out


def meanfield_filter(d, image_x, image_y, config=None):
    """Iterated Gaussian-weighted averaging of a score map.

    Each round replaces every pixel by the normalized average of its
    neighbours within ``spatial_radius``, weighted by a spatial Gaussian
    times a Gaussian on the guide-feature difference. This is the
    truncated-window form of the mean-field update of a fully connected CRF
    with Gaussian pairwise potentials.
    """
    config = config or FilterConfig()
    d = check_scores(d, name="score map")
    feats = guide_features(image_x, image_y)
    if feats.shape[:2] != d.shape:
        raise ValueError(f"guide shape {feats.shape[:2]} does not match {d.shape}")
    if config.spatial_radius >= min(d.shape):
        raise ValueError(
            f"spatial_radius {config.spatial_radius} must be smaller than the image"
        )
    inv_2s2 = 1.0 / (2.0 * config.spatial_sigma ** 2)
    inv_2k2 = 1.0 / (2.0 * config.kernel_width ** 2)
    periodic = config.boundary == "periodic"
    out = d.copy()
    for _ in range(config.iterations):
        out = _bilateral_pass(out, feats, config.spatial_radius, inv_2s2, inv_2k2, periodic)
    return out


def between_class_variance(values, threshold):
    """``w0 * w1 * (mu0 - mu1)**2`` for the split ``values > threshold``."""
    values = np.asarray(values, dtype=np.float64).ravel()
    high = values > threshold
    n_high = np.count_nonzero(high)
    if n_high == 0 or n_high == values.size:
        return 0.0
    w1 = n_high / values.size
    return (1.0 - w1) * w1 * (values[~high].mean() - values[high].mean()) ** 2


def otsu_threshold(d, num_bins=256):
    """Otsu threshold over the interior bin edges of [0, 1].

    Candidate thresholds are ``t = b / num_bins`` for ``b = 1 .. num_bins-1``;
    the split is ``value > t``. Class statistics come from per-bin counts
    and sums of the raw values, so the between-class variance at each
    candidate is exact. Ties resolve to the lowest threshold.

    Returns
    -------
    threshold : float or None
        None when no candidate separates the values (constant map).
    change_map : ndarray of bool
    """
    d = check_scores(d, name="score map")
    if d.min() < 0 or d.max() > 1:
        raise ValueError("otsu_threshold expects values in [0, 1]")
    v = d.ravel()
    # right-closed bins so that bin b holds (b/num_bins, (b+1)/num_bins]
    idx = np.clip(np.ceil(v * num_bins).astype(np.int64) - 1, 0, num_bins - 1)
    counts = np.bincount(idx, minlength=num_bins).astype(np.float64)
    sums = np.bincount(idx, weights=v, minlength=num_bins)
    n_low = np.cumsum(counts)[:-1]
    s_low = np.cumsum(sums)[:-1]
    n_high = v.size - n_low
    s_high = sums.sum() - s_low
    valid = (n_low > 0) & (n_high > 0)
    if not np.any(valid):
        warnings.warn("constant score map: Otsu threshold undefined, no change labelled")
        return None, np.zeros(d.shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = s_low / n_low - s_high / n_high
        var = (n_low / v.size) * (n_high / v.size) * gap * gap
    var = np.where(valid, var, -np.inf)
    b = int(np.argmax(var))
    threshold = (b + 1) / num_bins
    return threshold, d > threshold


def auc_rank(scores, labels):
    """ROC AUC via the Mann-Whitney rank statistic (ties count one half)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    n_pos = np.count_nonzero(labels)
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def kappa_from_counts(counts):
    """Cohen's kappa from confusion counts; None when chance agreement is 1.

    Uses ``(N * agree - S) / (N**2 - S)`` with
    ``S = (tp+fp)(tp+fn) + (fn+tn)(fp+tn)``, the usual ``(p_o - p_e) / (1 - p_e)``
    multiplied through by ``N**2`` so that integer counts stay exact.
    """
    n = counts.total
    chance = (counts.tp + counts.fp) * (counts.tp + counts.fn) + (
        counts.fn + counts.tn
    ) * (counts.fp + counts.tn)
    if chance == n * n:
        return None
    return (n * (counts.tp + counts.tn) - chance) / (n * n - chance)


@dataclass(frozen=True)
class MetricsReport:
    auc: float | None
    oa: float
    kappa: float | None
    confusion: ConfusionCounts
    threshold: float | None = None

    def to_dict(self):
        c = asdict(self.confusion)
        return {
            "auc": self.auc,
            "oa": self.oa,
            "kappa": self.kappa,
            "tp": c["tp"],
            "tn": c["tn"],
            "fp": c["fp"],
            "fn": c["fn"],
            "threshold": self.threshold,
        }


def score(change_map, truth, scores=None, threshold=None):
    """Evaluate a binary change map (and optional continuous scores).

    AUC is computed from ``scores`` when given; it is None if the truth
    mask holds a single class or no scores were supplied.
    """
    truth = check_mask(truth, name="ground truth")
    change_map = check_mask(change_map, shape=truth.shape, name="change map")
    auc = None
    if scores is not None:
        scores = check_scores(scores, shape=truth.shape)
        auc = auc_rank(scores, truth)
    counts = ConfusionCounts.from_maps(change_map, truth)
    oa = (counts.tp + counts.tn) / counts.total
    return MetricsReport(auc, oa, kappa_from_counts(counts), counts, threshold)
