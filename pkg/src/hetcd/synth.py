"""Synthetic co-registered heterogeneous image pairs with planted changes.

A smooth latent scene is observed directly (plus noise) by the first sensor.
The second sensor observes the scene after irregular regions were covered by
a new surface type (a fine patchwork of a few spectral signatures), mapped
through a channel-mixing function. Region sizes decay geometrically, so a
scene mixes a few large changes with many small ones. All randomness derives from one seed via
``numpy.random.SeedSequence`` spawning, one child stream per generation step.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

TEXTURES = ("smooth-gradient", "blobs")
CROSS_MAPS = ("linear", "quadratic", "exp-mix")

# child stream order of the seed sequence; append only
_STREAMS = ("scene", "changed_scene", "regions", "noise_x", "noise_y", "cross_map")


@dataclass(frozen=True)
class SynthConfig:
    n1: int = 256
    n2: int = 256
    P: int = 3
    Q: int = 4
    rng_seed: int = 0
    num_change_regions: int = 4
    change_area_fraction: float = 0.1
    region_size_ratio: float = 0.9
    base_texture: str = "smooth-gradient"
    noise_sigma_x: float = 0.02
    noise_sigma_y: float = 0.03
    cross_map: str = "linear"

    def __post_init__(self):
        if self.n1 < 2 or self.n2 < 2:
            raise ValueError("image must be at least 2x2")
        if self.P < 1 or self.Q < 1:
            raise ValueError("channel counts must be positive")
        if not 0 < self.change_area_fraction < 0.5:
            raise ValueError("change_area_fraction must lie in (0, 0.5)")
        if self.num_change_regions < 0:
            raise ValueError("num_change_regions must be >= 0")
        if not 0 < self.region_size_ratio <= 1:
            raise ValueError("region_size_ratio must lie in (0, 1]")
        if self.base_texture not in TEXTURES:
            raise ValueError(f"base_texture must be one of {TEXTURES}")
        if self.cross_map not in CROSS_MAPS:
            raise ValueError(f"cross_map must be one of {CROSS_MAPS}")
        if self.noise_sigma_x < 0 or self.noise_sigma_y < 0:
            raise ValueError("noise levels must be non-negative")


def _streams(seed):
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(_STREAMS, children)}


def _rescale(field, lo=0.1, hi=0.9):
    fmin, fmax = field.min(), field.max()
    if fmax == fmin:
        return np.full_like(field, 0.5 * (lo + hi))
    return lo + (hi - lo) * (field - fmin) / (fmax - fmin)


def _blobs(rng, n1, n2):
    n_blobs = max(8, (n1 * n2) // 300)
    rows = rng.uniform(0, n1, n_blobs)
    cols = rng.uniform(0, n2, n_blobs)
    radii = rng.uniform(3.0, 12.0, n_blobs)
    amps = rng.uniform(-1.0, 1.0, n_blobs)
    rr, cc = np.mgrid[0:n1, 0:n2].astype(np.float64)
    field = np.zeros((n1, n2))
    for r, c, s, a in zip(rows, cols, radii, amps):
        field += a * np.exp(-((rr - r) ** 2 + (cc - c) ** 2) / (2 * s * s))
    return field


def _smooth_gradient(rng, n1, n2):
    rr, cc = np.mgrid[0:n1, 0:n2].astype(np.float64)
    field = rng.normal() * rr / n1 + rng.normal() * cc / n2
    # plane waves with periods log-uniform in [8, 64] px
    for _ in range(12):
        period = np.exp(rng.uniform(np.log(8.0), np.log(64.0)))
        angle = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        wave = (np.cos(angle) * rr + np.sin(angle) * cc) / period
        field += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * wave + phase)
    return field


def latent_scene(rng, n1, n2, channels, texture):
    """Independent smooth texture per channel, each scaled to [0.1, 0.9]."""
    make = _blobs if texture == "blobs" else _smooth_gradient
    return np.stack([_rescale(make(rng, n1, n2)) for _ in range(channels)], axis=2)


def new_cover(rng, n1, n2, channels, num_signatures=3, texture_sigma=0.02, clump_sigma=1.0):
    """A new surface type: a fine patchwork of random signatures plus grain.

    Each signature covers an equal share of the patchwork.
    """
    signatures = rng.uniform(0.1, 0.9, (num_signatures, channels))
    field = gaussian_filter(rng.normal(size=(n1, n2)), clump_sigma)
    cuts = np.quantile(field, np.linspace(0.0, 1.0, num_signatures + 1)[1:-1])
    grain = rng.normal(0.0, texture_sigma, (n1, n2, channels))
    return signatures[np.searchsorted(cuts, field)] + grain


def _region_shape(rng, area):
    # the `area` highest cells of a radially decaying random field: a compact
    # blob with ragged edges and exactly `area` pixels
    side = int(np.ceil(1.6 * np.sqrt(area)))
    rr, cc = np.mgrid[0:side, 0:side] - (side - 1) / 2.0
    rough = gaussian_filter(rng.normal(size=(side, side)), side / 8.0, mode="wrap")
    rough *= 0.35 / rough.std()
    field = rough - np.hypot(rr, cc) / (side / 2.0)
    order = np.argsort(-field.ravel(), kind="stable")[:area]
    block = np.zeros(side * side, dtype=bool)
    block[order] = True
    return block.reshape(side, side)


def region_areas(total, num_regions, ratio):
    """Split ``total`` pixels into areas decaying by ``ratio``, largest first.

    Rounding leftovers go to the largest region, so the areas sum to ``total``.
    """
    weights = ratio ** np.arange(num_regions)
    areas = np.floor(weights / weights.sum() * total).astype(np.int64)
    areas[0] += total - areas.sum()
    return areas


def stamp_regions(rng, n1, n2, num_regions, fraction, ratio=1.0, max_tries=10000):
    """Non-overlapping blob regions totalling round(fraction * N) pixels.

    Region areas follow :func:`region_areas`, so the planted count is exact.
    """
    mask = np.zeros((n1, n2), dtype=bool)
    if num_regions == 0:
        return mask
    target = int(round(fraction * n1 * n2))
    for area in region_areas(target, num_regions, ratio):
        if area == 0:
            continue
        block = _region_shape(rng, int(area))
        h, w = block.shape
        if h > n1 or w > n2:
            raise ValueError("change region does not fit in the image")
        for _ in range(max_tries):
            r0 = int(rng.integers(0, n1 - h + 1))
            c0 = int(rng.integers(0, n2 - w + 1))
            if not mask[r0:r0 + h, c0:c0 + w].any():
                mask[r0:r0 + h, c0:c0 + w] |= block
                break
        else:
            raise ValueError("could not place non-overlapping change regions")
    return mask


def cross_map_params(rng, P, Q):
    mix = rng.normal(0.0, 1.0, size=(P, Q)) / np.sqrt(P)
    offset = rng.uniform(-0.5, 0.5, size=Q)
    positive = rng.uniform(0.3, 1.0, size=(P, Q))
    return {"mix": mix, "offset": offset, "positive": positive}


def apply_cross_map(latent, kind, params, noise):
    """Map a latent scene to the second modality; ``noise`` has the output shape."""
    if kind == "linear":
        return latent @ params["mix"] + params["offset"] + noise
    if kind == "quadratic":
        z = latent @ params["positive"]
        return z + 0.75 * z * z + params["offset"] + noise
    # log-domain mixing with multiplicative noise
    return np.exp(latent @ params["mix"] + params["offset"] + noise)


def generate_pair(config):
    """Return ``(image_x, image_y, change_mask)`` for a :class:`SynthConfig`."""
    c = config
    rng = _streams(c.rng_seed)
    scene = latent_scene(rng["scene"], c.n1, c.n2, c.P, c.base_texture)
    other = new_cover(rng["changed_scene"], c.n1, c.n2, c.P)
    mask = stamp_regions(
        rng["regions"], c.n1, c.n2, c.num_change_regions, c.change_area_fraction,
        c.region_size_ratio,
    )
    scene_t2 = np.where(mask[:, :, None], other, scene)

    image_x = scene + rng["noise_x"].normal(0.0, 1.0, scene.shape) * c.noise_sigma_x
    noise_y = rng["noise_y"].normal(0.0, 1.0, (c.n1, c.n2, c.Q)) * c.noise_sigma_y
    params = cross_map_params(rng["cross_map"], c.P, c.Q)
    image_y = apply_cross_map(scene_t2, c.cross_map, params, noise_y)
    return image_x, image_y, mask
