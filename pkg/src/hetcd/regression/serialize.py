"""Binary blobs for fitted regressors.

Layout (all integers little-endian)::

    b"HCDR1"            magic
    uint8               kind (0 gpr, 1 svr, 2 rfr, 3 hpt)
    uint32              length of the JSON header
    JSON header         {"params": ..., "scalars": ..., "arrays": [...]}
    NPZ archive         fitted array attributes, little-endian dtypes

A nearest-neighbor tree is not stored; it is rebuilt from the training
inputs on load.
"""

import io
import json
import struct
import zipfile

import numpy as np
from numpy.lib import format as npy_format
from scipy.spatial import cKDTree

from . import KINDS, kind_of

MAGIC = b"HCDR1"
KIND_CODES = {"gpr": 0, "svr": 1, "rfr": 2, "hpt": 3}
_KIND_NAMES = {v: k for k, v in KIND_CODES.items()}


def _fitted_attributes(estimator):
    return {
        name: value
        for name, value in vars(estimator).items()
        if name.endswith("_") and not name.startswith("_")
    }


def _little_endian(a):
    return a.astype(a.dtype.newbyteorder("<"), copy=False)


def _savez_fixed(buf, arrays):
    # np.savez stamps entries with the current time; a fixed stamp keeps the
    # blob a pure function of the model
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w") as fh:
                npy_format.write_array(fh, arrays[name], allow_pickle=False)


def dumps(estimator):
    """Serialize a fitted regressor to bytes."""
    kind = kind_of(estimator)
    attrs = _fitted_attributes(estimator)
    if not attrs:
        raise ValueError("estimator is not fitted")
    arrays, scalars = {}, {}
    for name, value in attrs.items():
        if name == "tree_":
            scalars[name] = value is not None
        elif isinstance(value, np.ndarray):
            arrays[name] = _little_endian(value)
        elif isinstance(value, (np.integer, np.floating, np.bool_)):
            scalars[name] = value.item()
        else:
            scalars[name] = value
    header = json.dumps(
        {"params": estimator.get_params(), "scalars": scalars, "arrays": sorted(arrays)},
        sort_keys=True,
    ).encode("utf-8")
    buf = io.BytesIO()
    _savez_fixed(buf, arrays)
    return MAGIC + struct.pack("<BI", KIND_CODES[kind], len(header)) + header + buf.getvalue()


def loads(blob):
    """Inverse of :func:`dumps`."""
    if blob[:len(MAGIC)] != MAGIC:
        raise ValueError("not a regressor blob: bad magic")
    offset = len(MAGIC)
    try:
        code, n = struct.unpack_from("<BI", blob, offset)
    except struct.error:
        raise ValueError("truncated regressor blob") from None
    if code not in _KIND_NAMES:
        raise ValueError(f"unknown regressor kind byte {code}")
    offset += struct.calcsize("<BI")
    header = json.loads(blob[offset:offset + n].decode("utf-8"))
    estimator = KINDS[_KIND_NAMES[code]](**header["params"])
    with np.load(io.BytesIO(blob[offset + n:]), allow_pickle=False) as data:
        missing = set(header["arrays"]) - set(data.files)
        if missing:
            raise ValueError(f"regressor blob lacks arrays {sorted(missing)}")
        for name in header["arrays"]:
            setattr(estimator, name, data[name])
    for name, value in header["scalars"].items():
        if name == "tree_":
            value = cKDTree(estimator.X_train_) if value else None
        setattr(estimator, name, value)
    return estimator


def dump(estimator, path):
    with open(path, "wb") as fh:
        fh.write(dumps(estimator))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
