"""Binary containers for float weight tensors (QMT) and quantized tensors (QMQ).

Both formats are deterministic byte streams: writing the same tensors twice
produces identical files, and load(save(x)) round-trips every field exactly.
All multi-byte integers are little-endian.

QMT v1 layout::

    magic "QMT1" | u32 version=1 | u32 tensor_count
    per tensor:
      u32 name_len | name bytes (UTF-8)
      u8 ndim | u8 channel_axis | u64 dims[ndim]
      f32 data[prod(dims)]            row-major

QMQ v1 layout::

    magic "QMQ1" | u32 version=1 | u32 tensor_count
    per tensor:
      u32 name_len | name bytes (UTF-8)
      u8 ndim | u8 channel_axis | u64 dims[ndim]
      u8 inlier_bits | u8 outlier_bits | f32 rho
      f32 inlier_scales[n_channels]   n_channels = dims[channel_axis]
      f32 outlier_scales[n_channels]
      u64 outlier_count | u64 outlier_indices[outlier_count]
      packed inlier codes             ceil(inlier_count*inlier_bits/8) bytes
      packed outlier codes            ceil(outlier_count*outlier_bits/8) bytes

Code packing: each signed code c is stored offset-binary as c + 2^(b-1),
so the bitstream is unsigned. Each stream starts byte-aligned; bits are
laid out LSB-first within a byte; trailing bits of the final byte are zero.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, IoError, ValidationError

QMT_MAGIC = b"QMT1"
QMQ_MAGIC = b"QMQ1"
FORMAT_VERSION = 1


def _as_f32(values, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: non-finite values are not allowed")
    return arr


@dataclass(eq=False)
class WeightTensor:
    """Named float32 tensor with a designated channel axis.

    `data` is the flat row-major payload; `dims` carries the shape.
    """

    name: str
    dims: tuple[int, ...]
    channel_axis: int
    data: np.ndarray

    def __post_init__(self) -> None:
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) == 0:
            raise ValidationError(f"{self.name}: dims must be non-empty")
        if any(d <= 0 for d in self.dims):
            raise ValidationError(f"{self.name}: dims must be positive, got {self.dims}")
        if not 0 <= self.channel_axis < len(self.dims):
            raise ValidationError(
                f"{self.name}: channel_axis {self.channel_axis} out of range for {len(self.dims)} dims"
            )
        self.data = _as_f32(self.data, self.name)
        if self.data.size != self.n_elements:
            raise ValidationError(
                f"{self.name}: data length {self.data.size} != prod(dims) {self.n_elements}"
            )

    @property
    def n_elements(self) -> int:
        return math.prod(self.dims)

    @property
    def n_channels(self) -> int:
        return self.dims[self.channel_axis]

    def shaped(self) -> np.ndarray:
        return self.data.reshape(self.dims)


@dataclass(eq=False)
class QuantizedTensor:
    """Dual-precision quantized tensor: packed inlier and outlier code sets.

    Codes are kept as plain integers in memory; bit-packing happens only in
    the QMQ byte stream. Scales are per-channel float32; a scale of exactly
    0 is the sentinel for a channel whose subset is empty or all-zero, and
    every code in such a channel must be 0.
    """

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

    def __post_init__(self) -> None:
        self.dims = tuple(int(d) for d in self.dims)
        self.inlier_scales = np.ascontiguousarray(self.inlier_scales, dtype=np.float32)
        self.outlier_scales = np.ascontiguousarray(self.outlier_scales, dtype=np.float32)
        self.outlier_indices = np.ascontiguousarray(self.outlier_indices, dtype=np.int64)
        self.inlier_codes = np.ascontiguousarray(self.inlier_codes, dtype=np.int32)
        self.outlier_codes = np.ascontiguousarray(self.outlier_codes, dtype=np.int32)
        self.validate()

    @property
    def n_elements(self) -> int:
        return math.prod(self.dims)

    @property
    def n_channels(self) -> int:
        return self.dims[self.channel_axis]

    def element_channels(self) -> np.ndarray:
        """Channel id of every flat element, in row-major order."""
        stride = math.prod(self.dims[self.channel_axis + 1 :])
        return (np.arange(self.n_elements) // stride) % self.dims[self.channel_axis]

    def inlier_positions(self) -> np.ndarray:
        mask = np.ones(self.n_elements, dtype=bool)
        mask[self.outlier_indices] = False
        return np.flatnonzero(mask)

    def validate(self) -> None:
        name = self.name
        if len(self.dims) == 0 or any(d <= 0 for d in self.dims):
            raise ValidationError(f"{name}: invalid dims {self.dims}")
        if not 0 <= self.channel_axis < len(self.dims):
            raise ValidationError(f"{name}: channel_axis out of range")
        for label, bits in (("inlier_bits", self.inlier_bits), ("outlier_bits", self.outlier_bits)):
            if not 2 <= bits <= 16:
                raise ValidationError(f"{name}: {label} must be in [2, 16], got {bits}")
        if not (math.isfinite(self.rho) and 0.0 <= self.rho <= 1.0):
            raise ValidationError(f"{name}: rho must be in [0, 1], got {self.rho}")
        n = self.n_elements
        c = self.n_channels
        if self.inlier_scales.shape != (c,) or self.outlier_scales.shape != (c,):
            raise ValidationError(f"{name}: scale arrays must have one entry per channel")
        for label, scales in (("inlier", self.inlier_scales), ("outlier", self.outlier_scales)):
            if not np.all(np.isfinite(scales)) or np.any(scales < 0):
                raise ValidationError(f"{name}: {label} scales must be finite and >= 0")
        idx = self.outlier_indices
        if idx.size:
            if idx[0] < 0 or idx[-1] >= n:
                raise ValidationError(f"{name}: outlier index out of range")
            if np.any(np.diff(idx) <= 0):
                raise ValidationError(f"{name}: outlier_indices must be strictly increasing")
        # count must be consistent with the requested fraction; rho survives an
        # f32 round trip, so allow the half-step slack of any deterministic rounding
        if abs(idx.size - self.rho * n) > 0.5 + 1e-6 * n:
            raise ValidationError(
                f"{name}: outlier count {idx.size} inconsistent with rho={self.rho} over {n} elements"
            )
        if self.outlier_codes.size != idx.size:
            raise ValidationError(f"{name}: outlier_codes length != outlier count")
        if self.inlier_codes.size != n - idx.size:
            raise ValidationError(f"{name}: inlier_codes length != inlier count")
        for label, codes, bits in (
            ("inlier", self.inlier_codes, self.inlier_bits),
            ("outlier", self.outlier_codes, self.outlier_bits),
        ):
            lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
            if codes.size and (codes.min() < lo or codes.max() > hi):
                raise ValidationError(f"{name}: {label} code outside [{lo}, {hi}]")
        # zero-scale sentinel implies all-zero codes for that channel
        ch = self.element_channels()
        in_ch = ch[self.inlier_positions()]
        if np.any(self.inlier_codes[self.inlier_scales[in_ch] == 0.0] != 0):
            raise ValidationError(f"{name}: nonzero inlier code in zero-scale channel")
        out_ch = ch[self.outlier_indices]
        if np.any(self.outlier_codes[self.outlier_scales[out_ch] == 0.0] != 0):
            raise ValidationError(f"{name}: nonzero outlier code in zero-scale channel")


def pack_codes(codes: np.ndarray, bits: int) -> bytes:
    """Bit-pack signed codes offset-binary, LSB-first, zero-padded to a byte."""
    codes = np.asarray(codes, dtype=np.int64)
    offset = 1 << (bits - 1)
    u = codes + offset
    if codes.size and (u.min() < 0 or u.max() >= (1 << bits)):
        raise ValidationError(f"code out of range for {bits}-bit packing")
    if codes.size == 0:
        return b""
    shifts = np.arange(bits, dtype=np.int64)
    bitmat = ((u[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bitmat.reshape(-1), bitorder="little").tobytes()


def packed_size(count: int, bits: int) -> int:
    return (count * bits + 7) // 8


def unpack_codes(payload: bytes, count: int, bits: int) -> np.ndarray:
    """Inverse of pack_codes; returns int32 codes."""
    if count == 0:
        return np.zeros(0, dtype=np.int32)
    need = packed_size(count, bits)
    if len(payload) < need:
        raise FormatError(f"packed code stream truncated: need {need} bytes, have {len(payload)}")
    bitvec = np.unpackbits(np.frombuffer(payload[:need], dtype=np.uint8), bitorder="little")
    bitmat = bitvec[: count * bits].reshape(count, bits).astype(np.int64)
    u = (bitmat << np.arange(bits, dtype=np.int64)).sum(axis=1)
    return (u - (1 << (bits - 1))).astype(np.int32)


class _Cursor:
    """Bounds-checked reader over an in-memory byte string."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"truncated file: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.buf)}"
            )
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

    def u64_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<u8").astype(np.int64)

    def f32_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<f4").copy()

    def done(self) -> bool:
        return self.pos == len(self.buf)


def _write_file(path: str | Path, blob: bytes) -> None:
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _read_file(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _tensor_header(name: str, dims: tuple[int, ...], channel_axis: int) -> bytes:
    name_bytes = name.encode("utf-8")
    parts = [struct.pack("<I", len(name_bytes)), name_bytes]
    if len(dims) > 255:
        raise ValidationError(f"{name}: more than 255 dims unsupported")
    parts.append(struct.pack("<BB", len(dims), channel_axis))
    parts.append(np.asarray(dims, dtype="<u8").tobytes())
    return b"".join(parts)


def _read_tensor_header(cur: _Cursor) -> tuple[str, tuple[int, ...], int]:
    name_len = cur.u32()
    try:
        name = cur.take(name_len).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"tensor name is not valid UTF-8: {exc}") from exc
    ndim = cur.u8()
    channel_axis = cur.u8()
    dims = tuple(int(d) for d in cur.u64_array(ndim))
    return name, dims, channel_axis


def save_qmt(path: str | Path, tensors: list[WeightTensor]) -> None:
    parts = [QMT_MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for t in tensors:
        parts.append(_tensor_header(t.name, t.dims, t.channel_axis))
        parts.append(t.data.astype("<f4", copy=False).tobytes())
    _write_file(path, b"".join(parts))


def load_qmt(path: str | Path) -> list[WeightTensor]:
    cur = _Cursor(_read_file(path))
    magic = cur.take(4)
    if magic != QMT_MAGIC:
        raise FormatError(f"bad magic: expected {QMT_MAGIC!r}, got {magic!r}")
    version = cur.u32()
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported QMT version {version}")
    count = cur.u32()
    tensors = []
    for _ in range(count):
        name, dims, channel_axis = _read_tensor_header(cur)
        n = math.prod(dims) if dims else 0
        data = cur.f32_array(n)
        tensor = WeightTensor(name=name, dims=dims, channel_axis=channel_axis, data=data)
        tensor.data.setflags(write=False)
        tensors.append(tensor)
    if not cur.done():
        raise FormatError(f"{len(cur.buf) - cur.pos} trailing bytes after last tensor")
    return tensors


def save_qmq(path: str | Path, tensors: list[QuantizedTensor]) -> None:
    parts = [QMQ_MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for t in tensors:
        t.validate()
        parts.append(_tensor_header(t.name, t.dims, t.channel_axis))
        parts.append(struct.pack("<BBf", t.inlier_bits, t.outlier_bits, t.rho))
        parts.append(t.inlier_scales.astype("<f4", copy=False).tobytes())
        parts.append(t.outlier_scales.astype("<f4", copy=False).tobytes())
        parts.append(struct.pack("<Q", t.outlier_indices.size))
        parts.append(t.outlier_indices.astype("<u8", copy=False).tobytes())
        parts.append(pack_codes(t.inlier_codes, t.inlier_bits))
        parts.append(pack_codes(t.outlier_codes, t.outlier_bits))
    _write_file(path, b"".join(parts))


def load_qmq(path: str | Path) -> list[QuantizedTensor]:
    cur = _Cursor(_read_file(path))
    magic = cur.take(4)
    if magic != QMQ_MAGIC:
        raise FormatError(f"bad magic: expected {QMQ_MAGIC!r}, got {magic!r}")
    version = cur.u32()
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported QMQ version {version}")
    count = cur.u32()
    tensors = []
    for _ in range(count):
        name, dims, channel_axis = _read_tensor_header(cur)
        inlier_bits = cur.u8()
        outlier_bits = cur.u8()
        rho = cur.f32()
        if not dims or not 0 <= channel_axis < len(dims):
            raise FormatError(f"{name}: invalid dims/channel_axis in header")
        n_channels = dims[channel_axis]
        inlier_scales = cur.f32_array(n_channels)
        outlier_scales = cur.f32_array(n_channels)
        n_out = cur.u64()
        n = math.prod(dims)
        if n_out > n:
            raise FormatError(f"{name}: outlier count {n_out} exceeds element count {n}")
        outlier_indices = cur.u64_array(n_out)
        inlier_codes = unpack_codes(cur.take(packed_size(n - n_out, inlier_bits)), n - n_out, inlier_bits)
        outlier_codes = unpack_codes(cur.take(packed_size(n_out, outlier_bits)), n_out, outlier_bits)
        tensors.append(
            QuantizedTensor(
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
    return tensors
