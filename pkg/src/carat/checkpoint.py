"""Binary checkpoints: named little-endian arrays behind a JSON header.

Layout: the magic line ``CARAT1``, an 8-byte little-endian header length,
the JSON header (config echo, step counters, entry table), then the raw
payload.  Arrays round-trip bit-exactly, so training resumed from a
checkpoint reproduces the uninterrupted run.
"""

import json
import os
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"CARAT1\n"

_DTYPES = {"f4": "<f4", "f8": "<f8", "i8": "<i8"}


def _dtype_code(arr):
    kind = arr.dtype.kind + str(arr.dtype.itemsize)
    if kind not in _DTYPES:
        raise FormatError(f"unsupported checkpoint dtype {arr.dtype}")
    return kind


def save_checkpoint(path, arrays, meta):
    """Write ``arrays`` (dict name -> ndarray) with ``meta`` (JSON-compatible)."""
    entries = []
    offset = 0
    blobs = []
    for name in arrays:
        arr = np.ascontiguousarray(arrays[name])
        code = _dtype_code(arr)
        blob = arr.astype(_DTYPES[code], copy=False).tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(arr.shape),
                        "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = dict(meta)
    header["entries"] = entries
    header_bytes = json.dumps(header).encode("utf-8")

    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Returns (arrays dict, meta dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise FormatError(f"{path}: corrupt header ({exc})")
        payload = fh.read()
    arrays = {}
    for entry in header.pop("entries"):
        dtype = np.dtype(_DTYPES[entry["dtype"]])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = entry["offset"]
        end = start + count * dtype.itemsize
        if end > len(payload):
            raise FormatError(f"{path}: truncated payload for entry {entry['name']!r}")
        arr = np.frombuffer(payload[start:end], dtype=dtype).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
    return arrays, header
