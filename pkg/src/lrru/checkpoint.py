"""Flat binary parameter checkpoints.

Layout: a single-line JSON header (parameter names, shapes, dtype and
byte offsets, plus the run config when given), a newline, the 4-byte
magic ``LRRU``, then the raw little-endian arrays back to back. Offsets
are relative to the first byte after the magic.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import DataError
from .tensor import Tensor

MAGIC = b"LRRU"


def save_checkpoint(path, params, config_dict=None):
    names = sorted(params.keys())
    table = {}
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(params[name].data, dtype="<f8")
        table[name] = {"shape": list(arr.shape), "dtype": "<f8", "offset": offset}
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {"format": "lrru-checkpoint", "version": 1, "params": table}
    if config_dict is not None:
        header["config"] = config_dict
    payload = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + MAGIC + b"".join(blobs)
    atomic_write_bytes(path, payload)


def load_checkpoint(path):
    """Return (params dict of Tensors, config dict or None)."""
    if not os.path.isfile(path):
        raise DataError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise DataError(f"malformed checkpoint (no header terminator): {path}")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed checkpoint header: {path}: {exc}") from exc
    body = raw[newline + 1:]
    if body[:4] != MAGIC:
        raise DataError(f"malformed checkpoint (bad magic): {path}")
    data = body[4:]
    if not isinstance(header, dict) or "params" not in header:
        raise DataError(f"malformed checkpoint header: {path}")
    params = {}
    for name, meta in header["params"].items():
        shape = tuple(meta["shape"])
        dtype = np.dtype(meta["dtype"])
        count = int(np.prod(shape)) if shape else 1
        start = int(meta["offset"])
        stop = start + count * dtype.itemsize
        if stop > len(data):
            raise DataError(f"truncated checkpoint: {path} ({name} runs past end of file)")
        arr = np.frombuffer(data[start:stop], dtype=dtype).reshape(shape).astype(np.float64)
        params[name] = Tensor(arr, requires_grad=True)
    return params, header.get("config")


def atomic_write_bytes(path, payload: bytes):
    """Write via a temp file and rename so failures leave no partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))
