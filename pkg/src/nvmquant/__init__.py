"""Outlier-aware dual-precision weight quantization for heterogeneous
NVM weight storage, with read-noise simulation and an analytical
latency/power/energy/area cost model."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    FormatError,
    InfeasibleError,
    IoError,
    NvmQuantError,
    ValidationError,
)
from .memsys import (
    AreaReport,
    CostReport,
    DseCandidate,
    DseResult,
    LatencyBreakdown,
    MemoryDevice,
    SweepRow,
    SystemConfig,
    area_report,
    baseline_latency_s,
    cost_report,
    explore_bandwidth,
    load_system_config,
    power_feasible,
    sweep_rho,
    weight_load_latency,
)
from .noisesim import (
    NoiseModel,
    default_noise,
    empirical_ber,
    load_noise_config,
    model_rng,
    perturb_cells_2bit,
    perturb_codes,
)
from .partition import PartitionMask, select_outliers
from .quantcore import (
    QuantizerSpec,
    ScaleSearchConfig,
    dequantize,
    expected_distortion,
    mse_optimal_scale,
    noise_aware_scale,
    quantize_channel,
    quantize_tensor,
    reconstruction_mse,
)
from .tensor_store import (
    QuantizedTensor,
    WeightTensor,
    load_qmq,
    load_qmt,
    pack_codes,
    save_qmq,
    save_qmt,
    unpack_codes,
)

__all__ = [
    "__version__",
    "NvmQuantError",
    "ConfigError",
    "ValidationError",
    "FormatError",
    "IoError",
    "InfeasibleError",
    "WeightTensor",
    "QuantizedTensor",
    "load_qmt",
    "save_qmt",
    "load_qmq",
    "save_qmq",
    "pack_codes",
    "unpack_codes",
    "PartitionMask",
    "select_outliers",
    "QuantizerSpec",
    "ScaleSearchConfig",
    "quantize_channel",
    "mse_optimal_scale",
    "expected_distortion",
    "noise_aware_scale",
    "quantize_tensor",
    "dequantize",
    "reconstruction_mse",
    "NoiseModel",
    "default_noise",
    "model_rng",
    "perturb_codes",
    "perturb_cells_2bit",
    "empirical_ber",
    "load_noise_config",
    "MemoryDevice",
    "SystemConfig",
    "LatencyBreakdown",
    "CostReport",
    "AreaReport",
    "DseCandidate",
    "DseResult",
    "SweepRow",
    "weight_load_latency",
    "power_feasible",
    "cost_report",
    "area_report",
    "explore_bandwidth",
    "sweep_rho",
    "baseline_latency_s",
    "load_system_config",
]
