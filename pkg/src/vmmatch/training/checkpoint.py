"""Versioned binary tensor container with CRC32 integrity check.

Layout (little-endian): magic "UTCM", u32 version, u32 tensor count, then
per tensor: u32 name length, name bytes (utf-8), u8 dtype tag, u32 rank,
u64 dims, raw data; finally u32 CRC32 of everything before it. Structured
metadata (bin spec, vocab, config snapshot, rng state) rides along as a
JSON payload stored in a reserved uint8 tensor.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

MAGIC = b"UTCM"
VERSION = 1
META_KEY = "__meta__"

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4"), 2: np.dtype("<i8"),
           3: np.dtype("u1")}
_DTYPE_TAGS = {v: k for k, v in _DTYPES.items()}


class CheckpointError(IOError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray]):
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, len(tensors))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if not arr.flags["C_CONTIGUOUS"]:
            # note: ascontiguousarray would promote 0-d arrays to 1-d
            arr = np.ascontiguousarray(arr)
        tag = _DTYPE_TAGS.get(arr.dtype.newbyteorder("<"))
        if tag is None:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
        nb = name.encode("utf-8")
        blob += struct.pack("<I", len(nb)) + nb
        blob += struct.pack("<BI", tag, arr.ndim)
        blob += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        blob += arr.astype(arr.dtype.newbyteorder("<")).tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 + 4:
        raise CheckpointError(f"{path}: truncated checkpoint")
    if blob[:4] != MAGIC:
        raise CheckpointError(
            f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CheckpointError(f"{path}: CRC mismatch, file corrupted")
    version, count = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    off = 12
    end = len(blob) - 4
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off:off + nlen].decode("utf-8")
            off += nlen
            tag, rank = struct.unpack_from("<BI", blob, off)
            off += 5
            dims = struct.unpack_from(f"<{rank}Q", blob, off)
            off += 8 * rank
            dtype = _DTYPES[tag]
            nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            if off + nbytes > end:
                raise CheckpointError(f"{path}: truncated tensor {name!r}")
            out[name] = np.frombuffer(blob[off:off + nbytes],
                                      dtype=dtype).reshape(dims).copy()
            off += nbytes
    except (struct.error, KeyError) as exc:
        raise CheckpointError(f"{path}: malformed tensor table: {exc}") from exc
    if off != end:
        raise CheckpointError(f"{path}: trailing bytes after tensor table")
    return out


def save_checkpoint(path, named_arrays: dict[str, np.ndarray], meta: dict):
    tensors = dict(named_arrays)
    payload = json.dumps(meta, sort_keys=True).encode("utf-8")
    tensors[META_KEY] = np.frombuffer(payload, dtype=np.uint8)
    save_tensors(path, tensors)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    tensors = load_tensors(path)
    meta_arr = tensors.pop(META_KEY, None)
    meta = json.loads(bytes(meta_arr).decode("utf-8")) if meta_arr is not None else {}
    return tensors, meta
