"""Binary checkpoint format.

Layout, all integers unsigned 32-bit little-endian::

    b"SKF1" | version | len(config) | config JSON (UTF-8) | entry count
    per entry: len(name) | name (UTF-8) | rank | dims[rank] | float64 LE data

The config snapshot is JSON with sorted keys, so equal inputs give equal bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import FormatError
from ..nn import Module

MAGIC = b"SKF1"
VERSION = 1
_U32 = struct.Struct("<I")


def encode_checkpoint(params: Mapping[str, np.ndarray], config: dict) -> bytes:
    out = bytearray(MAGIC)
    out += _U32.pack(VERSION)
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    out += _U32.pack(len(blob)) + blob
    out += _U32.pack(len(params))
    for name, arr in params.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        out += _U32.pack(len(raw)) + raw
        out += _U32.pack(arr.ndim)
        for d in arr.shape:
            out += _U32.pack(d)
        out += np.ascontiguousarray(arr).tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"checkpoint truncated at offset {self.pos} while reading {what} "
                f"({n} bytes needed, {len(self.data) - self.pos} left)"
            )
        chunk = self.data[self.pos: self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def decode_checkpoint(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse checkpoint bytes into ``(config, {name: array})``; nothing is returned on error."""
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    version = r.u32("format version")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version} at offset 4, expected {VERSION}")
    n = r.u32("config length")
    start = r.pos
    try:
        config = json.loads(r.take(n, "config").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"config snapshot at offset {start} is not UTF-8 JSON: {exc}") from None
    count = r.u32("entry count")
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        at = r.pos
        raw = r.take(r.u32("entry name length"), "entry name")
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"entry name at offset {at} is not UTF-8") from None
        if name in params:
            raise FormatError(f"duplicate entry {name!r} at offset {at}")
        rank = r.u32(f"rank of {name}")
        shape = tuple(r.u32(f"dims of {name}") for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64))
        buf = r.take(8 * size, f"data of {name}")
        params[name] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes at offset {r.pos}")
    return config, params


def save_checkpoint(model: Module, config: dict, path: str | Path) -> bytes:
    data = encode_checkpoint({k: p.data for k, p in model.named_parameters()}, config)
    Path(path).write_bytes(data)
    return data


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from None
    return decode_checkpoint(data)


def load_into(model: Module, params: Mapping[str, np.ndarray]) -> Module:
    """Copy ``params`` into ``model`` after checking names and shapes against it."""
    own = dict(model.named_parameters())
    missing = sorted(set(own) - set(params))
    extra = sorted(set(params) - set(own))
    if missing or extra:
        raise FormatError(f"shape table mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
    for name, p in own.items():
        if params[name].shape != p.shape:
            raise FormatError(
                f"shape table mismatch for {name}: file {list(params[name].shape)}, "
                f"model {list(p.shape)}"
            )
    for name, p in own.items():
        p.data = np.array(params[name], dtype=np.float64)
    return model
