"""Shared data types and patch addressing.

Images are plain ``(n1, n2, C)`` float arrays and score maps are ``(n1, n2)``
arrays; pixel index ``n`` always means the row-major flat index
``row * n2 + col``.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PatchSpec:
    """Square patch side ``k`` and anchor stride ``delta`` (pixels)."""

    k: int
    delta: int = 1

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"patch side k must be an integer >= 2, got {self.k}")
        if int(self.delta) != self.delta or self.delta < 1:
            raise ValueError(f"stride delta must be an integer >= 1, got {self.delta}")
        if self.delta > self.k:
            raise ValueError(
                f"stride delta={self.delta} exceeds patch side k={self.k}; "
                "pixels between patches would never be scored"
            )

    def check_dims(self, n1, n2):
        if self.k > min(n1, n2):
            raise ValueError(
                f"patch larger than image: k={self.k} for image {n1}x{n2}"
            )


@dataclass(frozen=True)
class TrainingSet:
    """Paired pixel samples drawn from the same locations of both images.

    Attributes
    ----------
    indices : ndarray of shape (M,)
        Flat row-major pixel indices, unique.
    x : ndarray of shape (M, P)
    y : ndarray of shape (M, Q)
    """

    indices: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if idx.ndim != 1 or len(idx) < 1:
            raise ValueError("training set needs at least one pixel index")
        if x.ndim != 2 or y.ndim != 2 or len(x) != len(idx) or len(y) != len(idx):
            raise ValueError(
                f"inconsistent training arrays: indices {idx.shape}, x {x.shape}, y {y.shape}"
            )
        if len(np.unique(idx)) != len(idx):
            raise ValueError("training pixel indices must be unique")
        if idx.min() < 0:
            raise ValueError("negative pixel index in training set")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("training vectors must be finite")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def M(self):
        return len(self.indices)

    @classmethod
    def from_images(cls, image_x, image_y, indices):
        """Gather the pixel vectors at flat ``indices`` from both images."""
        n1, n2 = image_x.shape[:2]
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n1 * n2):
            raise ValueError("pixel index outside image")
        x = image_x.reshape(n1 * n2, -1)[idx]
        y = image_y.reshape(n1 * n2, -1)[idx]
        return cls(idx, x, y)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_maps(cls, predicted, truth):
        predicted = np.asarray(predicted, dtype=bool)
        truth = np.asarray(truth, dtype=bool)
        return cls(
            tp=int(np.count_nonzero(predicted & truth)),
            tn=int(np.count_nonzero(~predicted & ~truth)),
            fp=int(np.count_nonzero(predicted & ~truth)),
            fn=int(np.count_nonzero(~predicted & truth)),
        )


def _axis_anchors(n, k, delta):
    starts = list(range(0, n - k + 1, delta))
    if starts[-1] != n - k:
        starts.append(n - k)
    return starts


def patch_anchors(dims, spec):
    """Top-left corners of all patches on the ``delta``-strided grid.

    The final row and column of anchors are clamped to the image border so
    every pixel is covered by at least one patch. Anchors are returned in
    row-major order as an ``(A, 2)`` integer array of ``(row, col)``.
    """
    n1, n2 = dims
    spec.check_dims(n1, n2)
    rows = _axis_anchors(n1, spec.k, spec.delta)
    cols = _axis_anchors(n2, spec.k, spec.delta)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.int64)


def extract_patch_vectors(image, anchor, k):
    """Return the ``k*k`` channel vectors of a patch, pixels in row-major order."""
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[:, :, None]
    r, c = int(anchor[0]), int(anchor[1])
    n1, n2 = image.shape[:2]
    if r < 0 or c < 0 or r + k > n1 or c + k > n2:
        raise IndexError(f"patch at {(r, c)} with k={k} exceeds image {n1}x{n2}")
    return image[r:r + k, c:c + k].reshape(k * k, image.shape[2]).astype(np.float64)
