"""Binary checkpoint format ("WNET", version 1, little-endian).

Layout::

    magic        4 bytes  b"WNET"
    version      u32      1
    arch_id      str
    input_shape  3 x u32  (C, H, W)
    n_labels     u32, then n_labels x str
    n_groups     u32, then per group:
        name         str
        depth_index  u32
        frozen       u8
        n_params     u32, then per parameter:
            ndim     u32
            dims     ndim x u32
            payload  prod(dims) x f32
    history_len  u32, then history_len bytes (UTF-8 CSV, may be empty)

``str`` is a u32 byte length followed by UTF-8 bytes. The file must end
exactly after the history blob.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointCorruptError, CheckpointFormatError
from .nn import ARCHITECTURES, Network, build_from_specs
from .tensor import Tensor

MAGIC = b"WNET"
VERSION = 1


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def dumps(net: Network) -> bytes:
    out = [MAGIC, struct.pack("<I", VERSION), _pack_str(net.architecture_id)]
    out.append(struct.pack("<3I", *net.input_shape))
    out.append(struct.pack("<I", len(net.class_labels)))
    out.extend(_pack_str(lbl) for lbl in net.class_labels)
    out.append(struct.pack("<I", len(net.groups)))
    for g in net.groups:
        out.append(_pack_str(g.name))
        out.append(struct.pack("<IBI", g.depth_index, int(g.frozen), len(g.parameters)))
        for p in g.parameters:
            out.append(struct.pack("<I", p.data.ndim))
            out.append(struct.pack(f"<{p.data.ndim}I", *p.shape))
            out.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    out.append(struct.pack("<I", len(net.history_blob)))
    out.append(net.history_blob)
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointCorruptError(f"checkpoint truncated at byte {self.pos} (needed {n} more)")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def u32(self) -> int:
        return self.unpack("<I")[0]

    def string(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointCorruptError("invalid UTF-8 string in checkpoint") from exc


def loads(buf: bytes) -> Network:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise CheckpointFormatError("not a WNET checkpoint (bad magic)")
    r = _Reader(buf)
    r.take(4)
    version = r.u32()
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    arch = r.string()
    input_shape = r.unpack("<3I")
    labels = [r.string() for _ in range(r.u32())]
    if arch not in ARCHITECTURES:
        raise CheckpointFormatError(f"checkpoint names unknown architecture {arch!r}")
    if not labels:
        raise CheckpointCorruptError("checkpoint has an empty label list")
    net = build_from_specs(ARCHITECTURES[arch], input_shape, labels, None, arch)
    n_groups = r.u32()
    if n_groups != len(net.groups):
        raise CheckpointCorruptError(f"{arch} has {len(net.groups)} groups, checkpoint records {n_groups}")
    for g in net.groups:
        name = r.string()
        depth, frozen, n_params = r.unpack("<IBI")
        if name != g.name or depth != g.depth_index or n_params != len(g.parameters) or frozen > 1:
            raise CheckpointCorruptError(f"group record {name!r} inconsistent with architecture {arch}")
        g.frozen = bool(frozen)
        for i, p in enumerate(g.parameters):
            ndim = r.u32()
            dims = r.unpack(f"<{ndim}I")
            if tuple(dims) != p.shape:
                raise CheckpointCorruptError(f"{name}[{i}] has shape {dims}, expected {p.shape}")
            payload = r.take(4 * int(np.prod(dims)))
            g.parameters[i] = Tensor(np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims))
    net.history_blob = r.take(r.u32())
    if r.pos != len(buf):
        raise CheckpointCorruptError(f"{len(buf) - r.pos} trailing bytes after checkpoint payload")
    net.sync_grad_flags()
    return net


def save_checkpoint(net: Network, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(net))
    os.replace(tmp, path)


def load_checkpoint(path) -> Network:
    return loads(Path(path).read_bytes())
