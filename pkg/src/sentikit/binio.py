"""Little-endian binary container for arrays plus a JSON metadata block.

Layout: magic ``SNTK`` (4 bytes), format version (u32), kind string
(u64 length + UTF-8), metadata JSON (u64 length + UTF-8), entry count (u64),
then a table of contents -- per entry: name (u64 length + UTF-8), dtype
string (u64 length + UTF-8, NumPy ``str(dtype)``), ndim (u64), dims (u64
each) -- followed by the raw array payloads back to back, row-major, in
declared order. Round-trips are bit-exact.
"""

import json
import os
import struct
import tempfile

import numpy as np

from sentikit.errors import ArchiveError

MAGIC = b"SNTK"
VERSION = 1


def atomic_write_bytes(path, data: bytes):
    """Whole-file atomic write: temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<Q", len(raw)) + raw


def dump_container(kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION), _pack_str(kind)]
    parts.append(_pack_str(json.dumps(meta, sort_keys=True)))
    parts.append(struct.pack("<Q", len(arrays)))
    payloads = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        parts.append(_pack_str(name))
        parts.append(_pack_str(str(arr.dtype)))
        parts.append(struct.pack("<Q", arr.ndim))
        for dim in arr.shape:
            parts.append(struct.pack("<Q", dim))
        payloads.append(arr.tobytes())
    return b"".join(parts) + b"".join(payloads)


def write_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]):
    atomic_write_bytes(path, dump_container(kind, meta, arrays))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ArchiveError(f"{self.path}: truncated or corrupt container")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        n = self.u64()
        if n > len(self.data):
            raise ArchiveError(f"{self.path}: truncated or corrupt container")
        return self.take(n).decode("utf-8")


def read_container(path, expected_kind: str):
    """Load (meta, arrays) from ``path``; arrays preserve declared order."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError:
        raise ArchiveError(f"container file not found: {path}")
    r = _Reader(data, path)
    if r.take(4) != MAGIC:
        raise ArchiveError(f"{path}: not a container file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise ArchiveError(f"{path}: container version {version} unsupported (expected {VERSION})")
    kind = r.string()
    if kind != expected_kind:
        raise ArchiveError(f"{path}: container kind {kind!r}, expected {expected_kind!r}")
    try:
        meta = json.loads(r.string())
    except json.JSONDecodeError:
        raise ArchiveError(f"{path}: corrupt metadata block")
    count = r.u64()
    toc = []
    for _ in range(count):
        name = r.string()
        dtype = np.dtype(r.string())
        ndim = r.u64()
        shape = tuple(r.u64() for _ in range(ndim))
        toc.append((name, dtype, shape))
    arrays = {}
    for name, dtype, shape in toc:
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        raw = r.take(nbytes)
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    if r.pos != len(data):
        raise ArchiveError(f"{path}: trailing bytes after declared payload")
    return meta, arrays
