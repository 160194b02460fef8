"""Binary container for named complex matrices.

Layout (little-endian)::

    magic     8 bytes  b"UERISMAT"
    version   uint32
    count     uint32
    repeated count times:
        name_len  uint16, name  utf-8
        rows      uint32, cols  uint32
        payload   rows*cols complex64, row-major

Channel sets are stored as ``H_d``, ``G_0``, ``Q_0``, ``G_1``, ...; a
hybrid transceiver as ``F_A``, ``F_D``, ``W_A_H``, ``W_D_H``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .channel import ChannelSet

MAGIC = b"UERISMAT"
VERSION = 1


def dumps(matrices: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(matrices))]
    for name, mat in matrices.items():
        mat = np.atleast_2d(np.asarray(mat))
        if mat.ndim != 2:
            raise ValueError(f"{name}: only 2-D matrices can be stored")
        encoded = name.encode()
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack("<II", *mat.shape))
        parts.append(np.ascontiguousarray(mat, dtype="<c8").tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:8] != MAGIC:
        raise ValueError("not a matrix container (bad magic)")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise ValueError(f"unsupported container version {version}")
    pos = 16
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + name_len].decode()
        pos += name_len
        rows, cols = struct.unpack_from("<II", blob, pos)
        pos += 8
        nbytes = rows * cols * 8
        if pos + nbytes > len(blob):
            raise ValueError(f"{name}: truncated payload")
        out[name] = np.frombuffer(blob, dtype="<c8", count=rows * cols, offset=pos).reshape(rows, cols).astype(complex)
        pos += nbytes
    return out


def write_matrices(path: str | Path, matrices: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(matrices))


def read_matrices(path: str | Path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())


def channels_to_matrices(channels: ChannelSet) -> dict[str, np.ndarray]:
    out = {"H_d": channels.h_direct}
    for i, (g, q) in enumerate(zip(channels.g_list, channels.q_list)):
        out[f"G_{i}"] = g
        out[f"Q_{i}"] = q
    return out


def channels_from_matrices(mats: dict[str, np.ndarray]) -> ChannelSet:
    n = sum(1 for k in mats if k.startswith("G_"))
    return ChannelSet(mats["H_d"], [mats[f"G_{i}"] for i in range(n)], [mats[f"Q_{i}"] for i in range(n)])


def save_channels(path: str | Path, channels: ChannelSet) -> None:
    write_matrices(path, channels_to_matrices(channels))


def load_channels(path: str | Path) -> ChannelSet:
    return channels_from_matrices(read_matrices(path))
