"""File formats: NPY arrays, PNG change maps, training sets, TOML and JSON."""

import json
import struct
import sys

import numpy as np
from numpy.lib import format as npy_format
from PIL import Image

from .core import TrainingSet

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

NPY_DTYPE = np.dtype("<f4")
# a channel axis longer than this is taken as a channel-first layout
MAX_CHANNELS = 64
TRAINING_MAGIC = b"HCDT1"


class FormatError(ValueError):
    pass


def write_array(path, array):
    """Write an image ``(n1, n2, C)`` or map ``(n1, n2)`` as little-endian float32 NPY v1.0."""
    arr = np.asarray(array)
    if arr.ndim not in (2, 3):
        raise FormatError(f"expected a rank 2 or 3 array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FormatError("array contains NaN or Inf")
    arr = np.ascontiguousarray(arr, dtype=NPY_DTYPE)
    with open(path, "wb") as fh:
        npy_format.write_array(fh, arr, version=(1, 0), allow_pickle=False)


def read_array(path, kind=None):
    """Read a float32 NPY v1.0 file written by :func:`write_array`.

    Parameters
    ----------
    kind : {"image", "map", None}
        "image" requires rank 3 and promotes nothing; "map" requires rank 2;
        None accepts either.

    Returns
    -------
    ndarray of float64
    """
    with open(path, "rb") as fh:
        try:
            version = npy_format.read_magic(fh)
        except ValueError as exc:
            raise FormatError(f"{path}: not an NPY file ({exc})") from None
        if version != (1, 0):
            raise FormatError(f"{path}: NPY version {version} unsupported, expected 1.0")
        shape, fortran, dtype = npy_format.read_array_header_1_0(fh)
        if dtype != NPY_DTYPE:
            raise FormatError(
                f"{path}: dtype {dtype.str} unsupported, expected little-endian float32 '<f4'"
            )
        if fortran:
            raise FormatError(f"{path}: Fortran-ordered arrays are not supported")
        count = int(np.prod(shape))
        raw = fh.read(count * 4)
    if len(raw) != count * 4:
        raise FormatError(f"{path}: truncated data")
    data = np.frombuffer(raw, dtype=NPY_DTYPE)
    rank = len(shape)
    allowed = {"image": (3,), "map": (2,), None: (2, 3)}[kind]
    if rank not in allowed:
        what = {"image": "an image (n1, n2, C)", "map": "a map (n1, n2)"}.get(kind, "an array")
        raise FormatError(f"{path}: rank {rank} shape {shape} is not {what}")
    if rank == 3 and shape[2] > MAX_CHANNELS:
        raise FormatError(
            f"{path}: shape {shape} has {shape[2]} channels; channel-first "
            "(C, n1, n2) layout is not supported, expected (n1, n2, C)"
        )
    return data.reshape(shape).astype(np.float64)


def write_map_png(path, change_map):
    """Binary map as an 8-bit grayscale PNG with values 0 and 255."""
    m = np.asarray(change_map)
    if m.ndim != 2:
        raise FormatError(f"change map must be 2-D, got shape {m.shape}")
    Image.fromarray(np.where(m.astype(bool), 255, 0).astype(np.uint8), mode="L").save(path)


def read_map_png(path):
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    values = np.unique(arr)
    if not np.all(np.isin(values, (0, 255))):
        raise FormatError(f"{path}: change map must contain only 0 and 255")
    return arr == 255


def write_training_set(path, ts):
    """``HCDT1`` magic, uint32 M, P, Q, then int64 indices, float64 x and y (little-endian)."""
    M, P = ts.x.shape
    Q = ts.y.shape[1]
    with open(path, "wb") as fh:
        fh.write(TRAINING_MAGIC + struct.pack("<III", M, P, Q))
        fh.write(ts.indices.astype("<i8").tobytes())
        fh.write(ts.x.astype("<f8").tobytes())
        fh.write(ts.y.astype("<f8").tobytes())


def read_training_set(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != TRAINING_MAGIC:
        raise FormatError(f"{path}: not a training set file")
    try:
        M, P, Q = struct.unpack_from("<III", blob, 5)
    except struct.error:
        raise FormatError(f"{path}: truncated header") from None
    offset = 5 + 12
    expected = offset + 8 * M * (1 + P + Q)
    if len(blob) != expected:
        raise FormatError(f"{path}: size {len(blob)} does not match header (expected {expected})")
    idx = np.frombuffer(blob, "<i8", M, offset)
    x = np.frombuffer(blob, "<f8", M * P, offset + 8 * M).reshape(M, P)
    y = np.frombuffer(blob, "<f8", M * Q, offset + 8 * M * (1 + P)).reshape(M, Q)
    return TrainingSet(idx.astype(np.int64), x.astype(np.float64), y.astype(np.float64))


def load_toml(path):
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
