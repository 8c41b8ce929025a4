"""Checkpoint archives: a flat zip of named, shape-prefixed float arrays.

Each array entry is ``<u32 itemsize><u32 ndim><u32 dims...>`` followed by the
raw little-endian float payload.  The architecture description travels as
structured text (JSON) together with a mandatory format version.
"""

from __future__ import annotations

import io
import json
import struct
import zipfile

import numpy as np

from .errors import CheckpointMismatchError, ContractError
from .metrics import ArchitectureSpec

FORMAT_VERSION = 1
_ITEMSIZE_DTYPES = {4: "<f4", 8: "<f8"}


def _encode_array(arr):
    arr = np.asarray(arr)
    if arr.dtype.itemsize not in _ITEMSIZE_DTYPES:
        raise ContractError("only float32/float64 arrays are checkpointable, got %s" % arr.dtype)
    buf = io.BytesIO()
    buf.write(struct.pack("<II", arr.dtype.itemsize, arr.ndim))
    buf.write(struct.pack("<%dI" % arr.ndim, *arr.shape))
    buf.write(arr.astype(_ITEMSIZE_DTYPES[arr.dtype.itemsize]).tobytes())
    return buf.getvalue()


def _decode_array(blob):
    itemsize, ndim = struct.unpack_from("<II", blob, 0)
    dims = struct.unpack_from("<%dI" % ndim, blob, 8)
    data = np.frombuffer(blob, dtype=_ITEMSIZE_DTYPES[itemsize], offset=8 + 4 * ndim)
    return data.reshape(dims).copy()


def save_checkpoint(path, arch, groups, meta=None):
    """Write named array groups plus architecture/meta JSON.

    ``groups`` maps a group name (``params``, ``buffers``, ``opt`` ...) to a
    dict of array name -> ndarray.
    """
    header = {
        "version": FORMAT_VERSION,
        "arch": arch.to_dict(),
        "meta": meta or {},
        "groups": {g: sorted(entries) for g, entries in groups.items()},
    }
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        zf.writestr("checkpoint.json", json.dumps(header, indent=1, sort_keys=True))
        for group, entries in groups.items():
            for name, arr in entries.items():
                zf.writestr("%s/%s" % (group, name), _encode_array(arr))
    return path


def load_checkpoint(path):
    """Read a checkpoint; returns (ArchitectureSpec, groups, meta)."""
    with zipfile.ZipFile(path, "r") as zf:
        header = json.loads(zf.read("checkpoint.json"))
        if "version" not in header:
            raise ContractError("checkpoint %s lacks a version field" % path)
        if header["version"] != FORMAT_VERSION:
            raise ContractError(
                "checkpoint version %r unsupported (expected %d)" % (header["version"], FORMAT_VERSION)
            )
        groups = {}
        for group, names in header["groups"].items():
            groups[group] = {name: _decode_array(zf.read("%s/%s" % (group, name))) for name in names}
    arch = ArchitectureSpec.from_dict(header["arch"])
    return arch, groups, header.get("meta", {})


def require_matching_arch(expected, found):
    """Raise with a field-by-field diff when two architecture specs disagree."""
    if expected == found:
        return
    diffs = []
    for key, want in expected.to_dict().items():
        got = found.to_dict()[key]
        if want != got:
            diffs.append("%s: checkpoint=%r requested=%r" % (key, got, want))
    raise CheckpointMismatchError("architecture mismatch:\n  " + "\n  ".join(diffs))


def save_model(path, model, discriminator=None, meta=None, extra_groups=None):
    groups = {"params": model.params.state_arrays()}
    if discriminator is not None:
        groups["disc_params"] = discriminator.store.state_arrays()
        groups["disc_buffers"] = discriminator.buffers()
    if extra_groups:
        groups.update(extra_groups)
    return save_checkpoint(path, model.arch, groups, meta)


def load_model(path, dtype=None):
    """Rebuild an Interpolator from a checkpoint; returns (model, groups, meta)."""
    from .synthesis import Interpolator

    arch, groups, meta = load_checkpoint(path)
    model = Interpolator(arch, dtype=np.dtype(dtype) if dtype else np.float64)
    try:
        model.params.load_state(groups["params"])
    except Exception as exc:
        raise CheckpointMismatchError("checkpoint parameters do not fit architecture: %s" % exc) from exc
    return model, groups, meta
