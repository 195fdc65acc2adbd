import dataclasses
import math

import numpy as np
import pytest

from nvmquant.errors import ConfigError, InfeasibleError
from nvmquant.memsys import (
    GIB_BITS,
    MBIT,
    LPDDR5_DEFAULT,
    MemoryDevice,
    SystemConfig,
    area_report,
    baseline_latency_s,
    cost_report,
    explore_bandwidth,
    inlier_cells_per_weight,
    load_system_config,
    power_consumption_w,
    power_feasible,
    sweep_rho,
    weight_load_latency,
)
from nvmquant.noisesim import NoiseModel
from nvmquant.tensor_store import WeightTensor


def test_device_validation():
    with pytest.raises(ConfigError):
        MemoryDevice("x", 0.0, 1.0, 1.0, 1.0)
    with pytest.raises(ConfigError):
        MemoryDevice("x", 1.0, 1.0, -1.0, 1.0)


def test_system_config_validation():
    with pytest.raises(ConfigError, match="t_sync_cycles"):
        SystemConfig(t_sync_cycles=1)
    with pytest.raises(ConfigError, match="t_sync_cycles"):
        SystemConfig(t_sync_cycles=5)
    SystemConfig(t_sync_cycles=0)  # disabled sync stage is allowed
    with pytest.raises(ConfigError, match="mlc_bits"):
        SystemConfig(mlc_bits=4)
    with pytest.raises(ConfigError, match="rho"):
        SystemConfig(rho=1.5)
    with pytest.raises(ConfigError, match="unit counts"):
        SystemConfig(mram_channels=-1)


def test_latency_zero_transfers():
    cfg = SystemConfig(t_queue_ns=2.0)
    lat = weight_load_latency(0, 0, cfg)
    assert lat.t_mram_s == pytest.approx(3.5e-9 + 2e-9)
    assert lat.t_reram_s == pytest.approx(5e-9 + 2e-9)
    assert lat.total_s == pytest.approx(max(lat.t_mram_s, lat.t_reram_s) + cfg.t_sync_s)
    assert lat.bottleneck == "reram"


def test_latency_division_oracle():
    # 1 GiB per path, one unit each: reram needs 1/1.8 s and dominates
    cfg = SystemConfig(mram_channels=1, reram_arrays=1)
    lat = weight_load_latency(GIB_BITS, GIB_BITS, cfg)
    assert lat.t_mram_s == pytest.approx(1 / 36.57, rel=1e-6)
    assert lat.t_reram_s == pytest.approx(1 / 1.8, rel=1e-6)
    assert lat.bottleneck == "reram"
    assert lat.total_s == pytest.approx(1 / 1.8 + cfg.t_sync_s, rel=1e-6)


def test_latency_equal_paths():
    dev = MemoryDevice("m", 4.0, 1.0, 1.0, 1.0)
    cfg = SystemConfig(mram=dev, reram=dataclasses.replace(dev, name="reram"))
    lat = weight_load_latency(0, 0, cfg)
    assert lat.t_mram_s == lat.t_reram_s
    assert lat.total_s == lat.t_mram_s + cfg.t_sync_s


def test_latency_unserved_transfer():
    cfg = SystemConfig(mram_channels=0)
    with pytest.raises(InfeasibleError):
        weight_load_latency(100, 0, cfg)
    # zero transfer with zero units is fine
    assert weight_load_latency(0, 100, cfg).t_mram_s > 0


def test_latency_monotone_in_bandwidth():
    cfg = SystemConfig()
    bits = (1e9, 4e9)
    prev = math.inf
    for arrays in (1, 2, 8, 32):
        total = weight_load_latency(bits[0], bits[1], dataclasses.replace(cfg, reram_arrays=arrays)).total_s
        assert total <= prev
        prev = total


def test_power_trivial_and_strict():
    cfg = SystemConfig(power_budget_mw=1.0)
    assert power_feasible(0.0, 0.0, cfg)
    # consumption exactly at the budget: strict inequality rejects it
    cfg = SystemConfig(power_budget_mw=1000.0, e_network_pj=0.0)
    bw = 1e12  # 1e12 bits/s at 1 pJ/bit = exactly 1 W
    assert power_consumption_w(bw, 0.0, cfg) == 1.0
    assert not power_feasible(bw, 0.0, cfg)
    assert power_feasible(bw - 1e6, 0.0, cfg)


def test_power_unit_conversion_oracle():
    # defaults: 36.57 GiB/s * 8*2^30 * 1 pJ/bit and 1.8 GiB/s * 8*2^30 * 1.56 pJ/bit
    cfg = SystemConfig()
    got = power_consumption_w(36.57 * GIB_BITS, 1.8 * GIB_BITS, cfg)
    expect = 36.57 * 8 * 2**30 * 1e-12 + 1.8 * 8 * 2**30 * 1.56e-12
    assert got == pytest.approx(expect, rel=1e-12)
    assert got == pytest.approx(0.338255, rel=1e-3)


def test_inlier_cells_per_weight():
    assert inlier_cells_per_weight(3, 3) == 1.0
    assert inlier_cells_per_weight(3, 2) == 1.5
    assert inlier_cells_per_weight(3, 1) == 3.0
    assert inlier_cells_per_weight(16, 1) == 16.0
    assert inlier_cells_per_weight(5, 3) == 2.0


def test_cost_report_default_config_ratios():
    rep = cost_report(SystemConfig())
    assert rep.bits_per_weight == pytest.approx(3.6)
    assert rep.compression_ratio == pytest.approx(16 / 3.6)
    assert rep.cells_per_weight == pytest.approx(2.2)
    assert rep.cell_reduction == pytest.approx(16 / 2.2)
    assert rep.external_bits_per_weight == pytest.approx(2.1)
    assert rep.external_transfer_reduction == pytest.approx(16 / 2.1)
    assert rep.dram_weight_access_reduction == pytest.approx(1 - 2.1 / 16)
    assert rep.energy_per_weight_pj == pytest.approx(2.1 * 1.56 + 1.5 * 1.0)
    assert rep.energy_reduction == pytest.approx(56 / 4.776)


def test_cost_report_2bit_mlc():
    rep = cost_report(SystemConfig(mlc_bits=2))
    assert rep.cells_per_weight == pytest.approx(0.7 * 1.5 + 1.5)
    assert rep.cell_reduction == pytest.approx(16 / 2.55)


def test_cost_report_identity_consistency():
    rep = cost_report(SystemConfig(rho=0.17, inlier_bits=4, outlier_bits=7))
    assert rep.compression_ratio * rep.bits_per_weight == pytest.approx(16.0)
    assert rep.cell_reduction * rep.cells_per_weight == pytest.approx(16.0)
    assert rep.external_transfer_reduction * rep.external_bits_per_weight == pytest.approx(16.0)


def test_cost_report_degenerate_baseline():
    # weights stay FP16 on an LPDDR5-like inlier store: every ratio is 1
    cfg = SystemConfig(
        reram=dataclasses.replace(LPDDR5_DEFAULT, name="reram", unit_name="array"),
        rho=0.0,
        inlier_bits=16,
        mlc_bits=1,
        t_sync_cycles=0,
        reram_arrays=1,
        flash_area_mm2=0.0,
    )
    rep = cost_report(cfg)
    assert rep.compression_ratio == 1.0
    assert rep.cell_reduction == 1.0
    assert rep.external_transfer_reduction == 1.0
    assert rep.dram_weight_access_reduction == 0.0
    assert rep.energy_reduction == 1.0
    assert rep.latency_reduction == 1.0
    assert rep.area_delta_mm2 == 0.0


def test_area_report_reference_targets():
    rep = area_report(SystemConfig(param_count=1_513_000_000))
    # independent arithmetic: 0.7*N*3 / (30.1 * 2^20) etc.
    n = 1_513_000_000
    assert rep.reram_mm2 == pytest.approx(0.7 * n * 3 / (30.1 * MBIT))
    assert rep.mram_mm2 == pytest.approx(0.3 * n * 5 / (66 * MBIT))
    assert rep.baseline_mm2 == pytest.approx(16 * n / (209.9 * MBIT))
    assert abs(rep.reram_mm2 - 100.65) / 100.65 < 0.03
    assert abs(rep.nvm_mm2 - 133.66) / 133.66 < 0.05


def test_area_report_zero_params():
    rep = area_report(SystemConfig(param_count=0))
    assert rep.reram_mm2 == rep.mram_mm2 == rep.nvm_mm2 == rep.baseline_mm2 == 0.0


def test_dse_single_point():
    cfg = SystemConfig()
    result = explore_bandwidth(cfg, [1], [22])
    assert (result.best.mram_channels, result.best.reram_arrays) == (1, 22)
    assert len(result.table) == 1


def test_dse_matches_brute_force():
    cfg = SystemConfig(power_budget_mw=600.0, param_count=10**9)
    channels = [1, 2, 3]
    arrays = [1, 2, 4, 8, 16]
    result = explore_bandwidth(cfg, channels, arrays)

    # independent brute force over the same grid
    best = None
    for m in channels:
        for r in arrays:
            power = (
                m * 36.57 * GIB_BITS * 1e-12 + r * 1.8 * GIB_BITS * 1.56e-12
            )
            if not cfg.power_budget_mw * 1e-3 > power:
                continue
            t_m = 3.5e-9 + cfg.rho * cfg.outlier_bits * cfg.param_count / (m * 36.57 * GIB_BITS)
            t_r = 5e-9 + (1 - cfg.rho) * cfg.inlier_bits * cfg.param_count / (r * 1.8 * GIB_BITS)
            total = max(t_m, t_r) + cfg.t_sync_s
            key = (total, power, m + r)
            if best is None or key < best[0]:
                best = (key, m, r)
    assert best is not None
    assert (result.best.mram_channels, result.best.reram_arrays) == (best[1], best[2])
    assert result.best.latency_s == pytest.approx(best[0][0], rel=1e-12)


def test_dse_budget_zero_infeasible():
    with pytest.raises(InfeasibleError):
        explore_bandwidth(SystemConfig(power_budget_mw=0.0))


def test_dse_strict_inequality_boundary():
    # craft a budget exactly equal to the cheapest candidate's consumption
    cfg = SystemConfig()
    power = power_consumption_w(1 * cfg.mram.unit_bandwidth_bits, 1 * cfg.reram.unit_bandwidth_bits, cfg)
    with pytest.raises(InfeasibleError):
        explore_bandwidth(dataclasses.replace(cfg, power_budget_mw=power * 1e3), [1], [1])


def test_dse_tie_break_prefers_lower_power():
    # mram-bound config: extra arrays leave latency unchanged, so the
    # smallest array count that still clears the reram payload wins
    cfg = SystemConfig(rho=0.5)
    result = explore_bandwidth(cfg)
    assert result.best.mram_channels == 1
    # verify it is truly mram-bound and minimal among equal-latency picks
    equal = [
        c
        for c in result.table
        if c.feasible and c.latency_s == pytest.approx(result.best.latency_s, rel=1e-12)
    ]
    assert min(c.power_w for c in equal) == result.best.power_w


def test_dse_unservable_candidates_filtered():
    cfg = SystemConfig()  # rho=0.3 puts bits on both devices
    result = explore_bandwidth(cfg, [0, 1], [0, 22])
    assert not [c for c in result.table if c.feasible and 0 in (c.mram_channels, c.reram_arrays)]
    assert (result.best.mram_channels, result.best.reram_arrays) == (1, 22)


def make_tensors(seed=42):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(2):
        data = rng.standard_t(df=4, size=(8, 125)).astype(np.float32)
        out.append(WeightTensor(f"layer{i}", (8, 125), 0, data.ravel()))
    return out


def test_sweep_single_row():
    rows = sweep_rho(SystemConfig(), [0.3], make_tensors())
    assert len(rows) == 1
    assert rows[0].rho == 0.3
    assert rows[0].mse > 0
    assert 0 < rows[0].energy_norm < 1
    assert 0 < rows[0].latency_norm < 1


def test_sweep_validation():
    with pytest.raises(ConfigError):
        sweep_rho(SystemConfig(), [1.2], make_tensors())
    with pytest.raises(ConfigError):
        sweep_rho(SystemConfig(), [0.3], [])


def test_sweep_energy_column_closed_form():
    rows = sweep_rho(SystemConfig(), [0.1, 0.5], make_tensors(), noise=NoiseModel.zero())
    for row in rows:
        energy = (1 - row.rho) * 3 * 1.56 + row.rho * 5 * 1.0
        assert row.energy_norm == pytest.approx(energy / 56.0)


def test_load_system_config(tmp_path):
    p = tmp_path / "sys.cfg"
    p.write_text(
        "power_budget_mw = 500\n"
        "rho = 0.2\n"
        "reram_bandwidth_gib = 2.5\n"
        "param_count = 1000000\n"
        "mlc_bits = 2\n"
    )
    cfg = load_system_config(p)
    assert cfg.power_budget_mw == 500
    assert cfg.rho == 0.2
    assert cfg.reram.bandwidth_unit_gib == 2.5
    assert cfg.reram.read_energy_pj == 1.56  # untouched default
    assert cfg.param_count == 1_000_000
    assert cfg.mlc_bits == 2


def test_load_system_config_unknown_key(tmp_path):
    p = tmp_path / "sys.cfg"
    p.write_text("nope = 1\n")
    with pytest.raises(ConfigError, match="unknown"):
        load_system_config(p)


def test_baseline_latency_formula():
    cfg = SystemConfig(param_count=10**9)
    expect = 1.7e-9 + 16e9 / (186.26 * GIB_BITS)
    assert baseline_latency_s(cfg) == pytest.approx(expect, rel=1e-12)
