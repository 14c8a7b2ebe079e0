"""Change-possibility prior from co-located patch affinity matrices.

For every patch the pixels of each image are turned into a fully connected
graph with Gaussian affinities ``exp(-d**2 / h**2)``, where ``h`` is the mean
distance of the patch pixels to their 7th nearest neighbour. The Frobenius
norm of the difference of the two graphs is credited to every pixel of the
patch, and a pixel's possibility of change is the mean over its patches.
"""

import numba
import numpy as np

from .core import PatchSpec, extract_patch_vectors, patch_anchors
from .validation import check_image_pair

NEIGHBOR_RANK = 7


def pairwise_distances(vectors):
    """Euclidean distance matrix between the rows of ``vectors``."""
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2:
        raise ValueError("vectors must be a 2-D array of equal-length rows")
    if len(v) < 2:
        raise ValueError("need at least two vectors")
    diff = v[:, None, :] - v[None, :, :]
    return np.sqrt(np.einsum("ijc,ijc->ij", diff, diff))


def _neighbor_rank(n_pixels, rank=NEIGHBOR_RANK):
    return min(rank, n_pixels - 1)


def kernel_width(distances, rank=NEIGHBOR_RANK):
    """Mean over pixels of the distance to the ``rank``-th nearest other pixel.

    Patches with fewer than ``rank + 1`` pixels fall back to the farthest
    neighbour. Returns 0.0 for a degenerate (constant) patch.
    """
    d = np.asarray(distances, dtype=np.float64)
    n = d.shape[0]
    r = _neighbor_rank(n, rank)
    # the zero self-distance sorts first, so 0-based position r skips it
    return float(np.mean(np.partition(d, r, axis=1)[:, r]))


def affinity_from_distances(distances, h):
    """Gaussian affinities; ``h == 0`` yields the zero-distance indicator."""
    d = np.asarray(distances, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    if h < 0:
        raise ValueError("kernel width must be non-negative")
    if h == 0:
        return (d == 0).astype(np.float64)
    return np.exp(-(d * d) / (h * h))


def patch_norm(a_x, a_y):
    """Frobenius norm of the difference of two affinity matrices."""
    a_x = np.asarray(a_x, dtype=np.float64)
    a_y = np.asarray(a_y, dtype=np.float64)
    if a_x.shape != a_y.shape:
        raise ValueError(f"affinity shapes differ: {a_x.shape} vs {a_y.shape}")
    return float(np.sqrt(np.sum((a_x - a_y) ** 2)))


def patch_affinity(vectors, rank=NEIGHBOR_RANK):
    """Affinity matrix and kernel width of one patch's pixel vectors."""
    d = pairwise_distances(vectors)
    h = kernel_width(d, rank)
    return affinity_from_distances(d, h), h


@numba.njit(cache=True)
def _sq_dists(v, out):
    n, c = v.shape
    for i in range(n):
        out[i, i] = 0.0
        for j in range(i + 1, n):
            s = 0.0
            for ch in range(c):
                t = v[i, ch] - v[j, ch]
                s += t * t
            out[i, j] = s
            out[j, i] = s


@numba.njit(cache=True)
def _width_sq(d2, rank, buf):
    # squared mean over rows of the rank-th smallest distance; buf keeps the
    # rank + 1 smallest squared distances of the current row, self included
    n = d2.shape[0]
    total = 0.0
    for i in range(n):
        m = 0
        for j in range(n):
            v = d2[i, j]
            if m <= rank:
                p = m
                m += 1
            elif v < buf[rank]:
                p = rank
            else:
                continue
            while p > 0 and buf[p - 1] > v:
                buf[p] = buf[p - 1]
                p -= 1
            buf[p] = v
        total += np.sqrt(buf[rank])
    h = total / n
    return h * h


@numba.njit(cache=True)
def _upper_affinity(d2, h2, out):
    # strict upper triangle only; the diagonal is 1 in both modalities
    n = d2.shape[0]
    if h2 > 0.0:
        scale = -1.0 / h2
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = np.exp(d2[i, j] * scale)
    else:
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = 1.0 if d2[i, j] == 0.0 else 0.0


@numba.njit(cache=True)
def _norms_kernel(img_x, img_y, anchors, k, rank):
    n_anchor = anchors.shape[0]
    kk = k * k
    px = img_x.shape[2]
    py = img_y.shape[2]
    vx = np.empty((kk, px))
    vy = np.empty((kk, py))
    dx = np.empty((kk, kk))
    dy = np.empty((kk, kk))
    ax = np.empty((kk, kk))
    ay = np.empty((kk, kk))
    buf = np.empty(rank + 1)
    norms = np.empty(n_anchor)
    for a in range(n_anchor):
        r0 = anchors[a, 0]
        c0 = anchors[a, 1]
        for i in range(k):
            for j in range(k):
                p = i * k + j
                for ch in range(px):
                    vx[p, ch] = img_x[r0 + i, c0 + j, ch]
                for ch in range(py):
                    vy[p, ch] = img_y[r0 + i, c0 + j, ch]
        _sq_dists(vx, dx)
        _sq_dists(vy, dy)
        _upper_affinity(dx, _width_sq(dx, rank, buf), ax)
        _upper_affinity(dy, _width_sq(dy, rank, buf), ay)
        s = 0.0
        for i in range(kk):
            for j in range(i + 1, kk):
                t = ax[i, j] - ay[i, j]
                s += t * t
        norms[a] = np.sqrt(2.0 * s)
    return norms


@numba.njit(cache=True)
def _accumulate(norms, anchors, k, n1, n2):
    sums = np.zeros((n1, n2))
    counts = np.zeros((n1, n2), dtype=np.int64)
    for a in range(anchors.shape[0]):
        r0 = anchors[a, 0]
        c0 = anchors[a, 1]
        for i in range(r0, r0 + k):
            for j in range(c0, c0 + k):
                sums[i, j] += norms[a]
                counts[i, j] += 1
    return sums, counts


def patch_norms(image_x, image_y, spec, anchors=None):
    """Frobenius norm of the affinity difference for every patch.

    ``anchors`` restricts the evaluation to the given ``(row, col)`` corners;
    by default all anchors of ``spec`` are used.

    Returns
    -------
    anchors : ndarray of shape (A, 2)
    norms : ndarray of shape (A,)
    """
    x, y = check_image_pair(image_x, image_y)
    n1, n2 = x.shape[:2]
    if anchors is None:
        anchors = patch_anchors((n1, n2), spec)
    else:
        spec.check_dims(n1, n2)
        anchors = np.asarray(anchors, dtype=np.int64).reshape(-1, 2)
        if anchors.size and (
            anchors.min() < 0
            or anchors[:, 0].max() > n1 - spec.k
            or anchors[:, 1].max() > n2 - spec.k
        ):
            raise ValueError("anchor places a patch outside the image")
    rank = _neighbor_rank(spec.k * spec.k)
    norms = _norms_kernel(
        np.ascontiguousarray(x), np.ascontiguousarray(y), anchors, spec.k, rank
    )
    return anchors, norms


def normalize_minmax(values):
    """Scale to [0, 1]; a constant map becomes all zeros."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def possibility_map(image_x, image_y, spec, normalize=True):
    """Per-pixel mean of the patch norms covering each pixel.

    Parameters
    ----------
    image_x, image_y : array-like of shape (n1, n2, P) and (n1, n2, Q)
    spec : PatchSpec
    normalize : bool, default True
        Min-max scale the map to [0, 1]. An all-constant raw map normalizes
        to all zeros.
    """
    x, y = check_image_pair(image_x, image_y)
    n1, n2 = x.shape[:2]
    anchors, norms = patch_norms(x, y, spec)
    sums, counts = _accumulate(norms, anchors, spec.k, n1, n2)
    raw = sums / counts
    return normalize_minmax(raw) if normalize else raw


def possibility_map_reference(image_x, image_y, spec, normalize=True):
    """Slow per-patch evaluation built from the public numpy primitives."""
    x, y = check_image_pair(image_x, image_y)
    n1, n2 = x.shape[:2]
    sums = np.zeros((n1, n2))
    counts = np.zeros((n1, n2))
    for r, c in patch_anchors((n1, n2), spec):
        a_x, _ = patch_affinity(extract_patch_vectors(x, (r, c), spec.k))
        a_y, _ = patch_affinity(extract_patch_vectors(y, (r, c), spec.k))
        sums[r:r + spec.k, c:c + spec.k] += patch_norm(a_x, a_y)
        counts[r:r + spec.k, c:c + spec.k] += 1
    raw = sums / counts
    return normalize_minmax(raw) if normalize else raw


__all__ = [
    "PatchSpec",
    "affinity_from_distances",
    "kernel_width",
    "normalize_minmax",
    "pairwise_distances",
    "patch_affinity",
    "patch_norm",
    "patch_norms",
    "possibility_map",
    "possibility_map_reference",
]
