"""Stochastic read-error models for multi-level storage cells.

Two abstraction levels are provided. The code-level model shifts each
stored quantizer code by one level with probabilities (p_minus, p_zero,
p_plus), suppressing shifts that would leave the code range, or applies
an explicit row-stochastic confusion matrix over the 2^mlc_bits cell
states. The cell-level model packs pairs of 3-bit codes into three
2-bit cells and perturbs each cell independently, so one cell error can
move a code by more than one level.

All sampling is driven by numpy Generators; given the same seed the
perturbation stream is identical run to run. Parallel callers should
derive per-task seeds as base_seed XOR task ordinal.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .configio import coerce_float, coerce_float_list, coerce_int, parse_kv_file
from .errors import ConfigError, ValidationError
from .quantcore import QuantizerSpec

PROB_TOL = 1e-12
ROW_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Per-read transition model for one storage cell or code.

    confusion, when given, is a (2^mlc_bits, 2^mlc_bits) row-stochastic
    matrix over cell states and replaces the adjacent-shift model.
    """

    mlc_bits: int
    p_minus: float
    p_zero: float
    p_plus: float
    confusion: np.ndarray | None = None
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.mlc_bits not in (2, 3):
            raise ConfigError(f"mlc_bits must be 2 or 3, got {self.mlc_bits}")
        probs = (self.p_minus, self.p_zero, self.p_plus)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ConfigError(f"transition probabilities must be in [0, 1], got {probs}")
        if abs(sum(probs) - 1.0) > PROB_TOL:
            raise ConfigError(f"p_minus + p_zero + p_plus must be 1, got {sum(probs)!r}")
        if self.confusion is not None:
            m = np.asarray(self.confusion, dtype=np.float64)
            s = self.n_states
            if m.shape != (s, s):
                raise ConfigError(f"confusion matrix must be {s}x{s}, got {m.shape}")
            if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > ROW_TOL):
                raise ConfigError("confusion matrix rows must be non-negative and sum to 1")
            object.__setattr__(self, "confusion", m)

    @property
    def n_states(self) -> int:
        return 1 << self.mlc_bits

    @classmethod
    def adjacent(cls, p_minus: float, p_plus: float, mlc_bits: int = 3, rng_seed: int = 0) -> "NoiseModel":
        return cls(
            mlc_bits=mlc_bits,
            p_minus=p_minus,
            p_zero=1.0 - p_minus - p_plus,
            p_plus=p_plus,
            rng_seed=rng_seed,
        )

    @classmethod
    def zero(cls, mlc_bits: int = 3) -> "NoiseModel":
        return cls(mlc_bits=mlc_bits, p_minus=0.0, p_zero=1.0, p_plus=0.0)


# placeholder device defaults: the adjacent-state slip probability per read,
# picked so the 2-bit cell mode is the more reliable one
DEFAULT_P_3BIT = 0.01
DEFAULT_P_2BIT = 0.001


def default_noise(mlc_bits: int = 3, rng_seed: int = 0) -> NoiseModel:
    p = DEFAULT_P_3BIT if mlc_bits == 3 else DEFAULT_P_2BIT
    return NoiseModel.adjacent(p, p, mlc_bits=mlc_bits, rng_seed=rng_seed)


def model_rng(noise: NoiseModel, ordinal: int = 0) -> np.random.Generator:
    """Generator for task number `ordinal`; ordinal 0 is the base stream."""
    return np.random.default_rng(noise.rng_seed ^ ordinal)


def _adjacent_shifts(count: int, p_minus: float, p_plus: float, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(count)
    return (u >= 1.0 - p_plus).astype(np.int64) - (u < p_minus).astype(np.int64)


def _matrix_step(states: np.ndarray, matrix: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(matrix, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(states.size)
    return np.argmax(u[:, None] < cum[states], axis=1).astype(np.int64)


def perturb_codes(
    codes: np.ndarray,
    spec: QuantizerSpec,
    noise: NoiseModel,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Independently perturb each code; never leaves [qmin, qmax]."""
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size and (codes.min() < spec.qmin or codes.max() > spec.qmax):
        raise ValidationError(f"codes outside [{spec.qmin}, {spec.qmax}]")
    if rng is None:
        rng = model_rng(noise)
    if noise.confusion is None:
        shifts = _adjacent_shifts(codes.size, noise.p_minus, noise.p_plus, rng)
        out = np.clip(codes + shifts, spec.qmin, spec.qmax)
    else:
        if noise.n_states != 1 << spec.bits:
            raise ConfigError(
                f"confusion matrix has {noise.n_states} states but codes span {1 << spec.bits}"
            )
        offset = 1 << (spec.bits - 1)
        out = _matrix_step(codes + offset, noise.confusion, rng) - offset
    return out.astype(np.int32)


def pack_cells_2bit(codes: np.ndarray) -> np.ndarray:
    """Map 3-bit codes (offset-binary pairs) onto 2-bit cells.

    Pair (c0, c1) with unsigned images u0, u1 becomes cells
    [u0 bits 1..0], [u1 bit 2 << 1 | u0 bit 2], [u1 bits 1..0].
    Odd counts are padded with a zero code; the pad is dropped on unpack.
    """
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size and (codes.min() < -4 or codes.max() > 3):
        raise ValidationError("cell packing expects 3-bit codes in [-4, 3]")
    u = codes + 4
    if u.size % 2:
        u = np.concatenate([u, [4]])  # code 0
    u0, u1 = u[0::2], u[1::2]
    cells = np.empty(3 * u0.size, dtype=np.int64)
    cells[0::3] = u0 & 3
    cells[1::3] = ((u1 >> 2) << 1) | (u0 >> 2)
    cells[2::3] = u1 & 3
    return cells


def unpack_cells_2bit(cells: np.ndarray, count: int) -> np.ndarray:
    """Inverse of pack_cells_2bit, returning `count` signed codes."""
    cells = np.asarray(cells, dtype=np.int64)
    c0, c1, c2 = cells[0::3], cells[1::3], cells[2::3]
    u0 = ((c1 & 1) << 2) | c0
    u1 = ((c1 >> 1) << 2) | c2
    u = np.empty(2 * c0.size, dtype=np.int64)
    u[0::2] = u0
    u[1::2] = u1
    return (u[:count] - 4).astype(np.int32)


def perturb_cells_2bit(
    codes: np.ndarray,
    noise: NoiseModel,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Perturb 3-bit codes through their 2-bit cell representation."""
    if noise.mlc_bits != 2:
        raise ConfigError(f"cell-level model needs mlc_bits=2, got {noise.mlc_bits}")
    codes = np.asarray(codes, dtype=np.int64)
    if rng is None:
        rng = model_rng(noise)
    cells = pack_cells_2bit(codes)
    if noise.confusion is None:
        shifts = _adjacent_shifts(cells.size, noise.p_minus, noise.p_plus, rng)
        cells = np.clip(cells + shifts, 0, 3)
    else:
        cells = _matrix_step(cells, noise.confusion, rng)
    return unpack_cells_2bit(cells, codes.size)


def empirical_ber(noise: NoiseModel, samples: int, rng: np.random.Generator | None = None) -> float:
    """Monte-Carlo per-read state-error probability of the model itself.

    Adjacent mode measures the interior slip rate (no boundary in play);
    matrix mode averages misread probability over a uniform state prior.
    """
    if samples < 1:
        raise ConfigError(f"samples must be >= 1, got {samples}")
    if rng is None:
        rng = model_rng(noise)
    if noise.confusion is None:
        shifts = _adjacent_shifts(samples, noise.p_minus, noise.p_plus, rng)
        return float(np.mean(shifts != 0))
    states = rng.integers(0, noise.n_states, size=samples)
    out = _matrix_step(states, noise.confusion, rng)
    return float(np.mean(out != states))


def load_noise_config(path: str | Path) -> NoiseModel:
    """Read a NoiseModel from a key = value file.

    Recognized keys: mlc_bits, p_minus, p_plus, seed, and optional
    confusion rows row0..row{S-1} as comma-separated floats. p_zero is
    derived as 1 - p_minus - p_plus.
    """
    fields = parse_kv_file(path)
    known = {"mlc_bits", "p_minus", "p_plus", "seed"}
    mlc_bits = coerce_int(fields, "mlc_bits", default=3)
    p_minus = coerce_float(fields, "p_minus", default=0.0)
    p_plus = coerce_float(fields, "p_plus", default=0.0)
    seed = coerce_int(fields, "seed", default=0)
    n_states = 1 << mlc_bits if mlc_bits in (2, 3) else 0
    confusion = None
    row_keys = [k for k in fields if k.startswith("row")]
    if row_keys:
        rows = []
        for i in range(n_states):
            key = f"row{i}"
            if key not in fields:
                raise ConfigError(f"confusion matrix incomplete: missing {key}")
            rows.append(coerce_float_list(fields, key))
            known.add(key)
        confusion = np.array(rows, dtype=np.float64)
    unknown = set(fields) - known
    if unknown:
        raise ConfigError(f"unknown noise config keys: {sorted(unknown)}")
    return NoiseModel(
        mlc_bits=mlc_bits,
        p_minus=p_minus,
        p_zero=1.0 - p_minus - p_plus,
        p_plus=p_plus,
        confusion=confusion,
        rng_seed=seed,
    )
