"""Input validation helpers for images, score maps and masks."""

import numpy as np


def check_image(image, name="image"):
    """Coerce an image to a finite float64 array of shape (n1, n2, C).

    A 2-D array is treated as a single-channel image.
    """
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"{name} must have shape (n1, n2, C), got {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} is empty: shape {arr.shape}")
    arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_image_pair(image_x, image_y):
    """Validate two co-registered images; channel counts may differ."""
    x = check_image(image_x, "image_x")
    y = check_image(image_y, "image_y")
    if x.shape[:2] != y.shape[:2]:
        raise ValueError(
            f"image dimensions differ: {x.shape[:2]} vs {y.shape[:2]}"
        )
    return x, y


def check_scores(scores, shape=None, name="scores"):
    """Coerce a score map to a finite float64 array of shape (n1, n2)."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} shape {arr.shape} does not match {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_mask(mask, shape=None, name="mask"):
    """Coerce a binary mask (any 0/1 or bool array) to bool."""
    arr = np.asarray(mask)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} shape {arr.shape} does not match {tuple(shape)}")
    if arr.dtype != bool:
        values = np.unique(arr)
        if not np.all(np.isin(values, (0, 1))):
            raise ValueError(f"{name} must be binary, found values {values[:5]}")
        arr = arr.astype(bool)
    return arr
