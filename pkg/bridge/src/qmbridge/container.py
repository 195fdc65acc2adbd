"""Reader/writer for the QMT/QMQ tensor containers.

This is a self-contained implementation of the byte layout; the bridge talks
to the quantization toolkit only through these files and its CLI, never
through its Python API.

Both formats are little-endian:

    QMT: "QMT1" | u32 version=1 | u32 count
         per tensor: u32 name_len | name | u8 ndim | u8 channel_axis
                     | u64 dims[ndim] | f32 data[prod(dims)]

    QMQ: "QMQ1" | u32 version=1 | u32 count
         per tensor: same header, then
                     u8 inlier_bits | u8 outlier_bits | f32 rho
                     | f32 inlier_scales[C] | f32 outlier_scales[C]
                     | u64 n_out | u64 outlier_indices[n_out]
                     | packed inlier codes | packed outlier codes

Code streams store code + 2^(b-1) as unsigned b-bit fields, LSB-first,
each stream byte-aligned and zero-padded.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, IoError, ValidationError

QMT_MAGIC = b"QMT1"
QMQ_MAGIC = b"QMQ1"
FORMAT_VERSION = 1


@dataclass
class FloatRecord:
    """One QMT entry: a named flat float32 tensor plus its channel axis."""

    name: str
    dims: tuple[int, ...]
    channel_axis: int
    data: np.ndarray

    def shaped(self) -> np.ndarray:
        return self.data.reshape(self.dims)


@dataclass
class QuantRecord:
    """One QMQ entry, codes already unpacked to plain integers."""

    name: str
    dims: tuple[int, ...]
    channel_axis: int
    inlier_bits: int
    outlier_bits: int
    rho: float
    inlier_scales: np.ndarray
    outlier_scales: np.ndarray
    outlier_indices: np.ndarray
    inlier_codes: np.ndarray
    outlier_codes: np.ndarray

    @property
    def n_elements(self) -> int:
        return math.prod(self.dims)

    def dequantize(self) -> np.ndarray:
        """Reconstruct the flat float32 tensor (code * per-channel scale)."""
        n = self.n_elements
        stride = math.prod(self.dims[self.channel_axis + 1 :])
        channel = (np.arange(n) // stride) % self.dims[self.channel_axis]
        out = np.zeros(n, dtype=np.float32)
        mask = np.ones(n, dtype=bool)
        mask[self.outlier_indices] = False
        inl = np.flatnonzero(mask)
        out[inl] = self.inlier_codes.astype(np.float32) * self.inlier_scales[channel[inl]]
        out[self.outlier_indices] = (
            self.outlier_codes.astype(np.float32) * self.outlier_scales[channel[self.outlier_indices]]
        )
        return out


def packed_size(count: int, bits: int) -> int:
    return (count * bits + 7) // 8


def unpack_codes(payload: bytes, count: int, bits: int) -> np.ndarray:
    if count == 0:
        return np.zeros(0, dtype=np.int32)
    bitvec = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")
    if bitvec.size < count * bits:
        raise FormatError("packed code stream shorter than its element count")
    bitmat = bitvec[: count * bits].reshape(count, bits).astype(np.int64)
    u = (bitmat << np.arange(bits, dtype=np.int64)).sum(axis=1)
    return (u - (1 << (bits - 1))).astype(np.int32)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated file at offset {self.pos}: wanted {n} more bytes")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f32(self) -> float:
        return struct.unpack("<f", self.take(4))[0]

    def f32_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<f4").copy()

    def u64_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<u8").astype(np.int64)

    def done(self) -> bool:
        return self.pos == len(self.buf)


def _read_bytes(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _check_preamble(cur: _Reader, magic: bytes) -> int:
    got = cur.take(4)
    if got != magic:
        raise FormatError(f"bad magic: expected {magic!r}, got {got!r}")
    version = cur.u32()
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported container version {version}")
    return cur.u32()


def _read_header(cur: _Reader) -> tuple[str, tuple[int, ...], int]:
    name = cur.take(cur.u32()).decode("utf-8")
    ndim = cur.u8()
    channel_axis = cur.u8()
    dims = tuple(int(d) for d in cur.u64_array(ndim))
    if not dims or any(d <= 0 for d in dims) or channel_axis >= len(dims):
        raise FormatError(f"{name}: invalid dims/channel_axis in header")
    return name, dims, channel_axis


def write_qmt(path: str | Path, records: list[FloatRecord]) -> None:
    parts = [QMT_MAGIC, struct.pack("<II", FORMAT_VERSION, len(records))]
    for rec in records:
        data = np.ascontiguousarray(rec.data, dtype=np.float32).reshape(-1)
        if data.size != math.prod(rec.dims):
            raise ValidationError(f"{rec.name}: data length does not match dims {rec.dims}")
        if not np.all(np.isfinite(data)):
            raise ValidationError(f"{rec.name}: non-finite values are not allowed")
        if not 0 <= rec.channel_axis < len(rec.dims):
            raise ValidationError(f"{rec.name}: channel_axis out of range")
        name_bytes = rec.name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<BB", len(rec.dims), rec.channel_axis))
        parts.append(np.asarray(rec.dims, dtype="<u8").tobytes())
        parts.append(data.astype("<f4", copy=False).tobytes())
    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_qmt(path: str | Path) -> list[FloatRecord]:
    cur = _Reader(_read_bytes(path))
    count = _check_preamble(cur, QMT_MAGIC)
    records = []
    for _ in range(count):
        name, dims, channel_axis = _read_header(cur)
        data = cur.f32_array(math.prod(dims))
        records.append(FloatRecord(name=name, dims=dims, channel_axis=channel_axis, data=data))
    if not cur.done():
        raise FormatError(f"{len(cur.buf) - cur.pos} trailing bytes after last tensor")
    return records


def read_qmq(path: str | Path) -> list[QuantRecord]:
    cur = _Reader(_read_bytes(path))
    count = _check_preamble(cur, QMQ_MAGIC)
    records = []
    for _ in range(count):
        name, dims, channel_axis = _read_header(cur)
        inlier_bits = cur.u8()
        outlier_bits = cur.u8()
        rho = cur.f32()
        n_channels = dims[channel_axis]
        inlier_scales = cur.f32_array(n_channels)
        outlier_scales = cur.f32_array(n_channels)
        n = math.prod(dims)
        n_out = cur.u64()
        if n_out > n:
            raise FormatError(f"{name}: outlier count {n_out} exceeds element count {n}")
        outlier_indices = cur.u64_array(n_out)
        inlier_codes = unpack_codes(cur.take(packed_size(n - n_out, inlier_bits)), n - n_out, inlier_bits)
        outlier_codes = unpack_codes(cur.take(packed_size(n_out, outlier_bits)), n_out, outlier_bits)
        records.append(
            QuantRecord(
                name=name,
                dims=dims,
                channel_axis=channel_axis,
                inlier_bits=inlier_bits,
                outlier_bits=outlier_bits,
                rho=rho,
                inlier_scales=inlier_scales,
                outlier_scales=outlier_scales,
                outlier_indices=outlier_indices,
                inlier_codes=inlier_codes,
                outlier_codes=outlier_codes,
            )
        )
    if not cur.done():
        raise FormatError(f"{len(cur.buf) - cur.pos} trailing bytes after last tensor")
    return records
