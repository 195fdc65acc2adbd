"""Analytical cost model for a two-tier NVM weight store.

Inlier payloads live in ReRAM arrays (dense, noisy, off-chip tier of the
model), outlier payloads in MRAM channels, and the comparison baseline
is FP16 streamed from LPDDR5. Everything here is closed-form bandwidth,
power, energy, area and latency arithmetic; nothing is simulated.

Unit conventions, fixed across the module:
  bandwidth     GiB/s per channel or array, GiB = 2^30 bytes
  read energy   pJ/bit
  density       Mb/mm^2 with Mb = 2^20 bits
  latency       device access in ns, derived figures in seconds

Per-device load time is t_access + size/bandwidth + t_queue; the step
latency is the slower of the two tiers plus a clock-domain sync delay
of t_sync_cycles at clock_ghz. Power feasibility is the strict test
P_budget > sum over tiers of allocated_bandwidth * (E_read + E_network).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING

from .configio import coerce_float, coerce_int, parse_kv_file
from .errors import ConfigError, InfeasibleError

if TYPE_CHECKING:
    from .noisesim import NoiseModel
    from .quantcore import ScaleSearchConfig
    from .tensor_store import WeightTensor

GIB_BITS = 8 * (1 << 30)
MBIT = 1 << 20
FP16_BITS = 16.0


@dataclass(frozen=True)
class MemoryDevice:
    name: str
    read_latency_ns: float
    bandwidth_unit_gib: float
    read_energy_pj: float
    density_mb_mm2: float
    unit_name: str = "channel"

    def __post_init__(self) -> None:
        for label in ("read_latency_ns", "bandwidth_unit_gib", "read_energy_pj", "density_mb_mm2"):
            if not getattr(self, label) > 0:
                raise ConfigError(f"{self.name}.{label} must be > 0")

    @property
    def unit_bandwidth_bits(self) -> float:
        return self.bandwidth_unit_gib * GIB_BITS


MRAM_DEFAULT = MemoryDevice("mram", 3.5, 36.57, 1.0, 66.0, "channel")
RERAM_DEFAULT = MemoryDevice("reram", 5.0, 1.8, 1.56, 30.1, "array")
LPDDR5_DEFAULT = MemoryDevice("lpddr5", 1.7, 186.26, 3.5, 209.9, "channel")


@dataclass(frozen=True)
class SystemConfig:
    mram: MemoryDevice = MRAM_DEFAULT
    reram: MemoryDevice = RERAM_DEFAULT
    lpddr5: MemoryDevice = LPDDR5_DEFAULT
    mram_channels: int = 1
    reram_arrays: int = 22
    power_budget_mw: float = 850.0
    e_network_pj: float = 0.0
    t_queue_ns: float = 0.0
    t_sync_cycles: int = 3
    clock_ghz: float = 3.3
    param_count: int = 1_513_000_000
    rho: float = 0.3
    inlier_bits: int = 3
    outlier_bits: int = 5
    mlc_bits: int = 3
    flash_area_mm2: float = 0.0
    dse_max_channels: int = 4
    dse_max_arrays: int = 32

    def __post_init__(self) -> None:
        if self.mram_channels < 0 or self.reram_arrays < 0:
            raise ConfigError("unit counts must be >= 0")
        if self.power_budget_mw < 0:
            raise ConfigError("power_budget_mw must be >= 0")
        if self.e_network_pj < 0 or self.t_queue_ns < 0:
            raise ConfigError("e_network_pj and t_queue_ns must be >= 0")
        # 0 disables the sync stage (single-tier setups); otherwise 2-4 cycles
        if self.t_sync_cycles != 0 and not 2 <= self.t_sync_cycles <= 4:
            raise ConfigError(f"t_sync_cycles must be 0 or in [2, 4], got {self.t_sync_cycles}")
        if not self.clock_ghz > 0:
            raise ConfigError("clock_ghz must be > 0")
        if self.param_count < 0:
            raise ConfigError("param_count must be >= 0")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must be in [0, 1], got {self.rho}")
        for label in ("inlier_bits", "outlier_bits"):
            if not 2 <= getattr(self, label) <= 16:
                raise ConfigError(f"{label} must be in [2, 16]")
        if self.mlc_bits not in (1, 2, 3):
            raise ConfigError(f"mlc_bits must be 1, 2 or 3, got {self.mlc_bits}")
        if self.flash_area_mm2 < 0:
            raise ConfigError("flash_area_mm2 must be >= 0")
        if self.dse_max_channels < 1 or self.dse_max_arrays < 1:
            raise ConfigError("DSE grid bounds must be >= 1")

    @property
    def t_sync_s(self) -> float:
        return self.t_sync_cycles / (self.clock_ghz * 1e9)

    def mram_payload_bits(self) -> float:
        return self.rho * self.outlier_bits * self.param_count

    def reram_payload_bits(self) -> float:
        return (1.0 - self.rho) * self.inlier_bits * self.param_count


@dataclass(frozen=True)
class LatencyBreakdown:
    t_mram_s: float
    t_reram_s: float
    t_sync_s: float
    total_s: float
    bottleneck: str


def _device_time(bits: float, device: MemoryDevice, units: int, t_queue_ns: float) -> float:
    base = device.read_latency_ns * 1e-9 + t_queue_ns * 1e-9
    if bits <= 0:
        return base
    if units <= 0:
        raise InfeasibleError(f"{bits:.0f} bits routed to {device.name} with 0 {device.unit_name}s")
    return base + bits / (units * device.unit_bandwidth_bits)


def weight_load_latency(mram_bits: float, reram_bits: float, cfg: SystemConfig) -> LatencyBreakdown:
    t_m = _device_time(mram_bits, cfg.mram, cfg.mram_channels, cfg.t_queue_ns)
    t_r = _device_time(reram_bits, cfg.reram, cfg.reram_arrays, cfg.t_queue_ns)
    bottleneck = "reram" if t_r > t_m else "mram"
    return LatencyBreakdown(
        t_mram_s=t_m,
        t_reram_s=t_r,
        t_sync_s=cfg.t_sync_s,
        total_s=max(t_m, t_r) + cfg.t_sync_s,
        bottleneck=bottleneck,
    )


def power_consumption_w(bw_mram_bits: float, bw_reram_bits: float, cfg: SystemConfig) -> float:
    e_net = cfg.e_network_pj
    return (
        bw_mram_bits * (cfg.mram.read_energy_pj + e_net)
        + bw_reram_bits * (cfg.reram.read_energy_pj + e_net)
    ) * 1e-12


def power_feasible(bw_mram_bits: float, bw_reram_bits: float, cfg: SystemConfig) -> bool:
    """Strict test: consumption exactly at the budget is infeasible."""
    return cfg.power_budget_mw * 1e-3 > power_consumption_w(bw_mram_bits, bw_reram_bits, cfg)


def inlier_cells_per_weight(bits: int, mlc_bits: int) -> float:
    # pair-packing granularity: two b-bit codes share cells, so the cost
    # per weight is a half-integer (3 bits in 2-bit cells = 1.5 cells)
    return math.ceil(2 * bits / mlc_bits) / 2


def baseline_latency_s(cfg: SystemConfig) -> float:
    """FP16 weights streamed once over a single LPDDR5 channel."""
    return _device_time(FP16_BITS * cfg.param_count, cfg.lpddr5, 1, cfg.t_queue_ns)


@dataclass(frozen=True)
class AreaReport:
    reram_mm2: float
    mram_mm2: float
    nvm_mm2: float
    baseline_mm2: float
    delta_mm2: float


def area_report(cfg: SystemConfig) -> AreaReport:
    n = cfg.param_count
    reram = (1.0 - cfg.rho) * n * cfg.inlier_bits / (cfg.reram.density_mb_mm2 * MBIT)
    mram = cfg.rho * n * cfg.outlier_bits / (cfg.mram.density_mb_mm2 * MBIT)
    baseline = FP16_BITS * n / (cfg.lpddr5.density_mb_mm2 * MBIT) + cfg.flash_area_mm2
    return AreaReport(
        reram_mm2=reram,
        mram_mm2=mram,
        nvm_mm2=reram + mram,
        baseline_mm2=baseline,
        delta_mm2=reram + mram - baseline,
    )


@dataclass(frozen=True)
class CostReport:
    bits_per_weight: float
    compression_ratio: float
    cells_per_weight: float
    cell_reduction: float
    external_bits_per_weight: float
    external_transfer_reduction: float
    dram_weight_access_reduction: float
    energy_per_weight_pj: float
    energy_reduction: float
    latency_per_step_s: float
    latency_reduction: float
    reram_area_mm2: float
    mram_area_mm2: float
    nvm_area_mm2: float
    baseline_area_mm2: float
    area_delta_mm2: float
    power_budget_mw: float

    def as_dict(self) -> dict[str, float]:
        return {
            "bits_per_weight": self.bits_per_weight,
            "compression_ratio": self.compression_ratio,
            "cells_per_weight": self.cells_per_weight,
            "cell_reduction": self.cell_reduction,
            "external_bits_per_weight": self.external_bits_per_weight,
            "external_transfer_reduction": self.external_transfer_reduction,
            "dram_weight_access_reduction": self.dram_weight_access_reduction,
            "energy_per_weight_pj": self.energy_per_weight_pj,
            "energy_reduction": self.energy_reduction,
            "latency_per_step_s": self.latency_per_step_s,
            "latency_reduction": self.latency_reduction,
            "reram_area_mm2": self.reram_area_mm2,
            "mram_area_mm2": self.mram_area_mm2,
            "nvm_area_mm2": self.nvm_area_mm2,
            "baseline_area_mm2": self.baseline_area_mm2,
            "area_delta_mm2": self.area_delta_mm2,
            "power_budget_mw": self.power_budget_mw,
        }


def cost_report(cfg: SystemConfig) -> CostReport:
    rho, b_in, b_out = cfg.rho, cfg.inlier_bits, cfg.outlier_bits
    bits_pw = (1.0 - rho) * b_in + rho * b_out
    cells_pw = (1.0 - rho) * inlier_cells_per_weight(b_in, cfg.mlc_bits) + rho * b_out
    ext_pw = (1.0 - rho) * b_in
    e_net = cfg.e_network_pj
    energy_pw = (1.0 - rho) * b_in * (cfg.reram.read_energy_pj + e_net) + rho * b_out * (
        cfg.mram.read_energy_pj + e_net
    )
    base_energy = FP16_BITS * (cfg.lpddr5.read_energy_pj + e_net)
    lat = weight_load_latency(cfg.mram_payload_bits(), cfg.reram_payload_bits(), cfg)
    base_lat = baseline_latency_s(cfg)
    area = area_report(cfg)
    return CostReport(
        bits_per_weight=bits_pw,
        compression_ratio=FP16_BITS / bits_pw,
        cells_per_weight=cells_pw,
        cell_reduction=FP16_BITS / cells_pw,
        external_bits_per_weight=ext_pw,
        external_transfer_reduction=FP16_BITS / ext_pw if ext_pw > 0 else math.inf,
        dram_weight_access_reduction=1.0 - ext_pw / FP16_BITS,
        energy_per_weight_pj=energy_pw,
        energy_reduction=base_energy / energy_pw,
        latency_per_step_s=lat.total_s,
        latency_reduction=base_lat / lat.total_s,
        reram_area_mm2=area.reram_mm2,
        mram_area_mm2=area.mram_mm2,
        nvm_area_mm2=area.nvm_mm2,
        baseline_area_mm2=area.baseline_mm2,
        area_delta_mm2=area.delta_mm2,
        power_budget_mw=cfg.power_budget_mw,
    )


@dataclass(frozen=True)
class DseCandidate:
    mram_channels: int
    reram_arrays: int
    power_w: float
    servable: bool
    power_ok: bool
    latency_s: float | None

    @property
    def feasible(self) -> bool:
        return self.servable and self.power_ok


@dataclass(frozen=True)
class DseResult:
    best: DseCandidate
    table: list[DseCandidate]


def explore_bandwidth(
    cfg: SystemConfig,
    channels: list[int] | None = None,
    arrays: list[int] | None = None,
) -> DseResult:
    """Enumerate unit allocations, filter by power and servability, pick
    the feasible point with the lowest step latency. Ties go to lower
    power, then fewer total units."""
    if channels is None:
        channels = list(range(1, cfg.dse_max_channels + 1))
    if arrays is None:
        arrays = list(range(1, cfg.dse_max_arrays + 1))
    channels = sorted(set(int(c) for c in channels))
    arrays = sorted(set(int(a) for a in arrays))
    if not channels or not arrays:
        raise ConfigError("candidate grid is empty")
    if channels[0] < 0 or arrays[0] < 0:
        raise ConfigError("unit counts must be >= 0")

    mram_bits = cfg.mram_payload_bits()
    reram_bits = cfg.reram_payload_bits()
    table: list[DseCandidate] = []
    best: DseCandidate | None = None
    best_key: tuple[float, float, int] | None = None
    for m in channels:
        for r in arrays:
            bw_m = m * cfg.mram.unit_bandwidth_bits
            bw_r = r * cfg.reram.unit_bandwidth_bits
            power = power_consumption_w(bw_m, bw_r, cfg)
            power_ok = power_feasible(bw_m, bw_r, cfg)
            servable = (mram_bits <= 0 or m > 0) and (reram_bits <= 0 or r > 0)
            latency = None
            if servable:
                alloc = replace(cfg, mram_channels=m, reram_arrays=r)
                latency = weight_load_latency(mram_bits, reram_bits, alloc).total_s
            cand = DseCandidate(m, r, power, servable, power_ok, latency)
            table.append(cand)
            if cand.feasible:
                key = (latency, power, m + r)
                if best_key is None or key < best_key:
                    best, best_key = cand, key
    if best is None:
        raise InfeasibleError(
            f"no candidate satisfies the {cfg.power_budget_mw} mW budget and serves the payload"
        )
    return DseResult(best=best, table=table)


@dataclass(frozen=True)
class SweepRow:
    rho: float
    mse: float
    energy_norm: float
    latency_norm: float
    mram_channels: int
    reram_arrays: int
    latency_s: float


def sweep_rho(
    cfg: SystemConfig,
    rhos: list[float],
    tensors: "list[WeightTensor]",
    noise: "NoiseModel | None" = None,
    search: "ScaleSearchConfig | None" = None,
) -> list[SweepRow]:
    """Re-quantize the tensors at each rho and pair the reconstruction
    MSE with the cost model at that rho (energy from cost_report, latency
    from the DSE optimum, both normalized to the FP16/LPDDR5 baseline)."""
    from .noisesim import default_noise
    from .quantcore import DEFAULT_SEARCH, QuantizerSpec, quantize_tensor, reconstruction_mse

    if noise is None:
        noise = default_noise(cfg.mlc_bits if cfg.mlc_bits in (2, 3) else 3)
    if search is None:
        search = DEFAULT_SEARCH
    if not tensors:
        raise ConfigError("sweep needs at least one tensor")
    rows = []
    for rho in rhos:
        if not 0.0 <= rho <= 1.0:
            raise ConfigError(f"rho must be in [0, 1], got {rho}")
        at_rho = replace(cfg, rho=float(rho))
        in_spec = QuantizerSpec(at_rho.inlier_bits)
        out_spec = QuantizerSpec(at_rho.outlier_bits)
        sq_sum = 0.0
        n_sum = 0
        for t in tensors:
            q = quantize_tensor(t, rho, in_spec, out_spec, noise, search)
            sq_sum += reconstruction_mse(t, q) * t.n_elements
            n_sum += t.n_elements
        report = cost_report(at_rho)
        dse = explore_bandwidth(at_rho)
        base_lat = baseline_latency_s(at_rho)
        rows.append(
            SweepRow(
                rho=float(rho),
                mse=sq_sum / n_sum,
                energy_norm=1.0 / report.energy_reduction,
                latency_norm=dse.best.latency_s / base_lat,
                mram_channels=dse.best.mram_channels,
                reram_arrays=dse.best.reram_arrays,
                latency_s=dse.best.latency_s,
            )
        )
    return rows


_DEVICE_DEFAULTS = {"mram": MRAM_DEFAULT, "reram": RERAM_DEFAULT, "lpddr5": LPDDR5_DEFAULT}
_DEVICE_FIELDS = {
    "latency_ns": "read_latency_ns",
    "bandwidth_gib": "bandwidth_unit_gib",
    "energy_pj": "read_energy_pj",
    "density_mb": "density_mb_mm2",
}
_INT_KEYS = (
    "mram_channels",
    "reram_arrays",
    "t_sync_cycles",
    "param_count",
    "inlier_bits",
    "outlier_bits",
    "mlc_bits",
    "dse_max_channels",
    "dse_max_arrays",
)
_FLOAT_KEYS = (
    "power_budget_mw",
    "e_network_pj",
    "t_queue_ns",
    "clock_ghz",
    "rho",
    "flash_area_mm2",
)


def load_system_config(path: str | Path) -> SystemConfig:
    """Build a SystemConfig from a key = value file; every key optional.

    Device keys are {mram,reram,lpddr5}_{latency_ns,bandwidth_gib,
    energy_pj,density_mb}; the rest mirror SystemConfig field names.
    """
    return system_config_from_fields(parse_kv_file(path))


def system_config_from_fields(fields: dict[str, str]) -> SystemConfig:
    kwargs = {}
    known = set()
    for dev, default in _DEVICE_DEFAULTS.items():
        dev_kwargs = {}
        for suffix, attr in _DEVICE_FIELDS.items():
            key = f"{dev}_{suffix}"
            known.add(key)
            if key in fields:
                dev_kwargs[attr] = coerce_float(fields, key)
        if dev_kwargs:
            kwargs[dev] = replace(default, **dev_kwargs)
    for key in _INT_KEYS:
        known.add(key)
        if key in fields:
            kwargs[key] = coerce_int(fields, key)
    for key in _FLOAT_KEYS:
        known.add(key)
        if key in fields:
            kwargs[key] = coerce_float(fields, key)
    unknown = set(fields) - known
    if unknown:
        raise ConfigError(f"unknown system config keys: {sorted(unknown)}")
    return SystemConfig(**kwargs)
