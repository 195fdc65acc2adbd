"""Uniform per-channel quantization with noise-aware scale search.

The quantizer is symmetric: code = clamp(round(v / s), qmin, qmax) with
round-half-to-even, signed range [-2^(b-1), 2^(b-1)-1], dequantization
code * s. Scale search evaluates an objective over a geometric grid of
candidate scales per channel and keeps the smallest argmin.

Two objectives are offered. The plain one is squared reconstruction
error. The noise-aware one adds the expected squared read error of a
storage cell that slips one level with probability p_minus + p_plus:

    L(s) = ||v - Q(v; s)||^2 + n * (p_minus + p_plus) * s^2

which penalizes large steps and pushes the optimum toward smaller
scales than the zero-noise search would pick.

The full pipeline quantize_tensor() splits a tensor by magnitude,
sends the outliers through a wide zero-noise quantizer and the inliers
through the narrow noise-aware one, per channel, and records everything
needed to reconstruct.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigError
from .partition import select_outliers
from .tensor_store import QuantizedTensor, WeightTensor

if TYPE_CHECKING:
    from .noisesim import NoiseModel


@dataclass(frozen=True)
class QuantizerSpec:
    """Signed uniform quantizer width. bits=3 covers codes -4..3."""

    bits: int

    def __post_init__(self) -> None:
        if not 2 <= self.bits <= 16:
            raise ConfigError(f"quantizer bits must be in [2, 16], got {self.bits}")

    @property
    def qmin(self) -> int:
        return -(1 << (self.bits - 1))

    @property
    def qmax(self) -> int:
        return (1 << (self.bits - 1)) - 1


@dataclass(frozen=True)
class ScaleSearchConfig:
    """Geometric candidate grid spanning [alpha_lo, alpha_hi] * max|v| / qmax."""

    grid_points: int = 128
    alpha_lo: float = 0.3
    alpha_hi: float = 1.0

    def __post_init__(self) -> None:
        if self.grid_points < 2:
            raise ConfigError(f"grid_points must be >= 2, got {self.grid_points}")
        if not 0.0 < self.alpha_lo < self.alpha_hi <= 1.0:
            raise ConfigError(
                f"need 0 < alpha_lo < alpha_hi <= 1, got [{self.alpha_lo}, {self.alpha_hi}]"
            )


DEFAULT_SEARCH = ScaleSearchConfig()


def quantize_channel(values: np.ndarray, scale: float, spec: QuantizerSpec) -> np.ndarray:
    if not (math.isfinite(scale) and scale > 0):
        raise ConfigError(f"scale must be > 0, got {scale}")
    v = np.asarray(values, dtype=np.float64)
    codes = np.clip(np.rint(v / scale), spec.qmin, spec.qmax)
    return codes.astype(np.int32)


def scale_candidates(values: np.ndarray, spec: QuantizerSpec, search: ScaleSearchConfig) -> np.ndarray:
    """Candidate scales for one channel, ascending. Empty for all-zero input."""
    v = np.asarray(values, dtype=np.float64)
    vmax = float(np.max(np.abs(v))) if v.size else 0.0
    if vmax == 0.0:
        return np.zeros(0, dtype=np.float64)
    base = vmax / spec.qmax
    return np.geomspace(search.alpha_lo * base, search.alpha_hi * base, search.grid_points)


def squared_error(values: np.ndarray, scale: float, spec: QuantizerSpec) -> float:
    """||v - Q(v; scale)||^2 in float64."""
    v = np.asarray(values, dtype=np.float64)
    codes = quantize_channel(v, scale, spec)
    return float(np.sum((v - codes * scale) ** 2))


def expected_distortion(
    values: np.ndarray, scale: float, spec: QuantizerSpec, noise: "NoiseModel"
) -> float:
    """Squared error plus the expected level-slip penalty n*(p-+p+)*scale^2."""
    v = np.asarray(values, dtype=np.float64)
    flip = noise.p_minus + noise.p_plus
    return squared_error(v, scale, spec) + v.size * flip * scale * scale


def mse_optimal_scale(values: np.ndarray, spec: QuantizerSpec, search: ScaleSearchConfig = DEFAULT_SEARCH) -> float:
    """Grid argmin of squared error; 0.0 sentinel for empty/all-zero input."""
    candidates = scale_candidates(values, spec, search)
    if candidates.size == 0:
        return 0.0
    errs = [squared_error(values, s, spec) for s in candidates]
    return float(candidates[int(np.argmin(errs))])


def noise_aware_scale(
    values: np.ndarray,
    spec: QuantizerSpec,
    noise: "NoiseModel",
    search: ScaleSearchConfig = DEFAULT_SEARCH,
) -> float:
    """Grid argmin of expected_distortion; 0.0 sentinel for empty/all-zero input."""
    candidates = scale_candidates(values, spec, search)
    if candidates.size == 0:
        return 0.0
    errs = [expected_distortion(values, s, spec, noise) for s in candidates]
    return float(candidates[int(np.argmin(errs))])


def _element_channels(dims: tuple[int, ...], channel_axis: int) -> np.ndarray:
    stride = math.prod(dims[channel_axis + 1 :])
    return (np.arange(math.prod(dims)) // stride) % dims[channel_axis]


def quantize_tensor(
    tensor: WeightTensor,
    rho: float,
    inlier_spec: QuantizerSpec,
    outlier_spec: QuantizerSpec,
    noise: "NoiseModel",
    search: ScaleSearchConfig = DEFAULT_SEARCH,
) -> QuantizedTensor:
    """Partition, then quantize each channel's two subsets independently.

    Inliers get the noise-aware scale at inlier_spec.bits, outliers the
    zero-noise scale at outlier_spec.bits. Scales are stored as float32
    and the codes are computed against the stored (rounded) scale so a
    container round trip reconstructs bit-identically.
    """
    mask = select_outliers(tensor, rho)
    n = tensor.n_elements
    n_ch = tensor.n_channels
    ch = _element_channels(tensor.dims, tensor.channel_axis)
    out_pos = mask.outlier_indices
    inl_pos = mask.inlier_indices(n)
    ch_in = ch[inl_pos]
    ch_out = ch[out_pos]
    v = tensor.data.astype(np.float64)

    inlier_scales = np.zeros(n_ch, dtype=np.float32)
    outlier_scales = np.zeros(n_ch, dtype=np.float32)
    inlier_codes = np.zeros(inl_pos.size, dtype=np.int32)
    outlier_codes = np.zeros(out_pos.size, dtype=np.int32)

    for c in range(n_ch):
        sel = ch_in == c
        s = np.float32(noise_aware_scale(v[inl_pos[sel]], inlier_spec, noise, search))
        if s > 0:
            inlier_scales[c] = s
            inlier_codes[sel] = quantize_channel(v[inl_pos[sel]], float(s), inlier_spec)

        sel = ch_out == c
        s = np.float32(mse_optimal_scale(v[out_pos[sel]], outlier_spec, search))
        if s > 0:
            outlier_scales[c] = s
            outlier_codes[sel] = quantize_channel(v[out_pos[sel]], float(s), outlier_spec)

    return QuantizedTensor(
        name=tensor.name,
        dims=tensor.dims,
        channel_axis=tensor.channel_axis,
        inlier_bits=inlier_spec.bits,
        outlier_bits=outlier_spec.bits,
        rho=float(rho),
        inlier_scales=inlier_scales,
        outlier_scales=outlier_scales,
        outlier_indices=out_pos,
        inlier_codes=inlier_codes,
        outlier_codes=outlier_codes,
    )


def dequantize(q: QuantizedTensor) -> WeightTensor:
    """Scatter inlier and outlier reconstructions back into one tensor."""
    q.validate()
    n = q.n_elements
    ch = q.element_channels()
    recon = np.zeros(n, dtype=np.float32)
    inl = q.inlier_positions()
    recon[inl] = q.inlier_codes.astype(np.float32) * q.inlier_scales[ch[inl]]
    out = q.outlier_indices
    recon[out] = q.outlier_codes.astype(np.float32) * q.outlier_scales[ch[out]]
    return WeightTensor(name=q.name, dims=q.dims, channel_axis=q.channel_axis, data=recon)


def reconstruction_mse(original: WeightTensor, q: QuantizedTensor) -> float:
    recon = dequantize(q)
    diff = original.data.astype(np.float64) - recon.data.astype(np.float64)
    return float(np.mean(diff * diff))
