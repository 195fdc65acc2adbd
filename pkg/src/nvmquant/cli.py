"""Command-line front end.

Subcommands: quantize (QMT -> QMQ), inject (QMQ -> QMQ with simulated
read errors), report (cost model JSON), dse (bandwidth design-space
search), sweep (rho sweep CSV). Every file-producing run also writes
<output>.manifest.json capturing the resolved configuration and seed,
with no timestamps, so reruns are byte-identical.

Exit codes: 0 ok, 2 usage or validation, 3 malformed or unreadable
artifact, 4 infeasible constraint system.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, FormatError, InfeasibleError, IoError, ValidationError
from .memsys import (
    SystemConfig,
    cost_report,
    explore_bandwidth,
    load_system_config,
    sweep_rho,
)
from .noisesim import (
    NoiseModel,
    default_noise,
    load_noise_config,
    model_rng,
    perturb_cells_2bit,
    perturb_codes,
)
from .quantcore import QuantizerSpec, ScaleSearchConfig, quantize_tensor, reconstruction_mse
from .tensor_store import load_qmq, load_qmt, save_qmq


def _noise_dict(noise: NoiseModel) -> dict:
    return {
        "mlc_bits": noise.mlc_bits,
        "p_minus": noise.p_minus,
        "p_zero": noise.p_zero,
        "p_plus": noise.p_plus,
        "confusion": None if noise.confusion is None else noise.confusion.tolist(),
        "rng_seed": noise.rng_seed,
    }


def _config_dict(cfg: SystemConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        out[f.name] = dataclasses.asdict(value) if dataclasses.is_dataclass(value) else value
    return out


def _write_json(path: Path, payload: dict) -> None:
    try:
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _write_manifest(out_path: str, command: str, config: dict, inputs: list[str], seed: int | None) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "inputs": inputs,
        "outputs": [out_path],
        "config": config,
    }
    _write_json(Path(out_path + ".manifest.json"), manifest)


def _print_json(payload: dict) -> None:
    print(json.dumps(payload, indent=2))


def _resolve_noise(args, mlc_bits: int) -> NoiseModel:
    if args.noise_config:
        noise = load_noise_config(args.noise_config)
    else:
        noise = default_noise(mlc_bits)
    if args.seed is not None:
        noise = dataclasses.replace(noise, rng_seed=args.seed)
    return noise


def _resolve_system(args) -> SystemConfig:
    cfg = load_system_config(args.config) if args.config else SystemConfig()
    overrides = {}
    for flag in ("rho", "inlier_bits", "outlier_bits", "mlc_bits", "param_count", "power_budget_mw"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[flag] = value
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def cmd_quantize(args) -> int:
    if not 0.0 <= args.rho <= 1.0:
        raise ConfigError(f"rho must be in [0, 1], got {args.rho}")
    noise = _resolve_noise(args, args.mlc_bits)
    search = ScaleSearchConfig(args.grid_points, args.alpha_lo, args.alpha_hi)
    in_spec = QuantizerSpec(args.inlier_bits)
    out_spec = QuantizerSpec(args.outlier_bits)
    tensors = load_qmt(args.infile)
    quantized = []
    rows = []
    payload_bits = 0
    n_total = 0
    for t in tensors:
        q = quantize_tensor(t, args.rho, in_spec, out_spec, noise, search)
        quantized.append(q)
        rows.append({"name": t.name, "n_elements": t.n_elements, "mse": reconstruction_mse(t, q)})
        payload_bits += q.inlier_codes.size * args.inlier_bits + q.outlier_codes.size * args.outlier_bits
        n_total += t.n_elements
    save_qmq(args.outfile, quantized)
    file_bits = Path(args.outfile).stat().st_size * 8
    bits_pw = payload_bits / n_total
    config = {
        "rho": args.rho,
        "inlier_bits": args.inlier_bits,
        "outlier_bits": args.outlier_bits,
        "mlc_bits": args.mlc_bits,
        "grid_points": args.grid_points,
        "alpha_lo": args.alpha_lo,
        "alpha_hi": args.alpha_hi,
        "noise": _noise_dict(noise),
    }
    _write_manifest(args.outfile, "quantize", config, [args.infile], noise.rng_seed)
    _print_json(
        {
            "tensors": rows,
            "bits_per_weight": bits_pw,
            "compression_ratio": 16.0 / bits_pw,
            "metadata_overhead_bits_per_weight": (file_bits - payload_bits) / n_total,
            "output": args.outfile,
        }
    )
    return 0


def cmd_inject(args) -> int:
    noise = _resolve_noise(args, 2 if args.mode == "cell" else 3)
    tensors = load_qmq(args.infile)
    rows = []
    total = 0
    out_tensors = []
    for ordinal, q in enumerate(tensors):
        rng = model_rng(noise, ordinal)
        spec = QuantizerSpec(q.inlier_bits)
        if args.mode == "cell":
            if q.inlier_bits != 3:
                raise ConfigError(f"{q.name}: cell mode expects 3-bit inlier codes, got {q.inlier_bits}")
            new_codes = perturb_cells_2bit(q.inlier_codes, noise, rng)
        else:
            new_codes = perturb_codes(q.inlier_codes, spec, noise, rng)
        # channels with the 0-scale sentinel hold no information; keep them silent
        ch = q.element_channels()[q.inlier_positions()]
        new_codes = np.where(q.inlier_scales[ch] > 0, new_codes, 0).astype(np.int32)
        flipped = int(np.count_nonzero(new_codes != q.inlier_codes))
        total += flipped
        rows.append({"name": q.name, "flipped_codes": flipped})
        out_tensors.append(dataclasses.replace(q, inlier_codes=new_codes))
    save_qmq(args.outfile, out_tensors)
    config = {"mode": args.mode, "noise": _noise_dict(noise)}
    _write_manifest(args.outfile, "inject", config, [args.infile], noise.rng_seed)
    _print_json({"tensors": rows, "total_flipped": total, "output": args.outfile})
    return 0


def cmd_report(args) -> int:
    cfg = _resolve_system(args)
    report = cost_report(cfg).as_dict()
    if args.out:
        _write_json(Path(args.out), report)
        _write_manifest(args.out, "report", _config_dict(cfg), [args.config] if args.config else [], None)
    _print_json(report)
    return 0


def cmd_dse(args) -> int:
    cfg = _resolve_system(args)
    channels = list(range(1, (args.max_channels or cfg.dse_max_channels) + 1))
    arrays = list(range(1, (args.max_arrays or cfg.dse_max_arrays) + 1))
    result = explore_bandwidth(cfg, channels, arrays)
    payload = {
        "best": dataclasses.asdict(result.best),
        "table": [dataclasses.asdict(c) for c in result.table],
    }
    if args.out:
        _write_json(Path(args.out), payload)
        _write_manifest(args.out, "dse", _config_dict(cfg), [args.config] if args.config else [], None)
    _print_json(payload)
    return 0


SWEEP_COLUMNS = ("rho", "mse", "energy_norm", "latency_norm", "mram_channels", "reram_arrays", "latency_s")


def cmd_sweep(args) -> int:
    cfg = _resolve_system(args)
    rhos = [float(tok) for tok in args.rho_list.split(",") if tok.strip()]
    if not rhos:
        raise ConfigError("empty rho list")
    noise = _resolve_noise(args, cfg.mlc_bits if cfg.mlc_bits in (2, 3) else 3)
    tensors = load_qmt(args.infile)
    rows = sweep_rho(cfg, rhos, tensors, noise)
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(
            ",".join(
                format(getattr(row, col), ".10g") if isinstance(getattr(row, col), float) else str(getattr(row, col))
                for col in SWEEP_COLUMNS
            )
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write {args.out}: {exc}") from exc
        config = _config_dict(cfg)
        config["rhos"] = rhos
        config["noise"] = _noise_dict(noise)
        _write_manifest(args.out, "sweep", config, [args.infile], noise.rng_seed)
    else:
        sys.stdout.write(text)
    return 0


def _add_noise_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--noise-config", help="key = value noise model file")
    p.add_argument("--seed", type=int, default=None, help="override the noise model seed")


def _add_system_flags(p: argparse.ArgumentParser, include_rho: bool = True) -> None:
    p.add_argument("--config", help="key = value system config file")
    if include_rho:
        p.add_argument("--rho", type=float, default=None)
    p.add_argument("--inlier-bits", type=int, default=None, dest="inlier_bits")
    p.add_argument("--outlier-bits", type=int, default=None, dest="outlier_bits")
    p.add_argument("--mlc-bits", type=int, default=None, dest="mlc_bits")
    p.add_argument("--param-count", type=int, default=None, dest="param_count")
    p.add_argument("--power-budget-mw", type=float, default=None, dest="power_budget_mw")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nvmquant", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"nvmquant {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="quantize a QMT tensor file into a QMQ container")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--rho", type=float, default=0.3)
    p.add_argument("--inlier-bits", type=int, default=3, dest="inlier_bits")
    p.add_argument("--outlier-bits", type=int, default=5, dest="outlier_bits")
    p.add_argument("--mlc-bits", type=int, default=3, dest="mlc_bits")
    p.add_argument("--grid-points", type=int, default=128, dest="grid_points")
    p.add_argument("--alpha-lo", type=float, default=0.3, dest="alpha_lo")
    p.add_argument("--alpha-hi", type=float, default=1.0, dest="alpha_hi")
    _add_noise_flags(p)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("inject", help="apply simulated read errors to a QMQ container")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--mode", choices=("code", "cell"), default="code")
    _add_noise_flags(p)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("report", help="print the analytical cost report as JSON")
    _add_system_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("dse", help="search bandwidth allocations under the power budget")
    _add_system_flags(p)
    p.add_argument("--max-channels", type=int, default=None, dest="max_channels")
    p.add_argument("--max-arrays", type=int, default=None, dest="max_arrays")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dse)

    p = sub.add_parser("sweep", help="re-quantize at each rho and tabulate cost columns")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--rho", dest="rho_list", default="0.1,0.2,0.3,0.4,0.5", help="comma-separated rho values")
    _add_system_flags(p, include_rho=False)
    _add_noise_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, IoError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def entrypoint() -> None:
    sys.exit(main())
