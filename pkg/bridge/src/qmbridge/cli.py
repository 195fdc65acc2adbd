"""Command-line front end: make-toy / export / import / eval."""

from __future__ import annotations

import argparse
import json
import sys

import torch

from . import __version__, convert, evalq, toy
from .errors import ConfigError, FormatError, IoError, ManifestMismatch, ValidationError

_DTYPES = {"float32": torch.float32, "float16": torch.float16, "bfloat16": torch.bfloat16}


def _parse_axis_args(pairs: list[str]) -> dict[str, int]:
    axes: dict[str, int] = {}
    for pair in pairs:
        name, _, value = pair.partition("=")
        if not name or not value:
            raise ConfigError(f"--axis expects NAME=AXIS, got {pair!r}")
        try:
            axes[name] = int(value)
        except ValueError as exc:
            raise ConfigError(f"--axis {pair!r}: axis is not an integer") from exc
    return axes


def cmd_make_toy(args: argparse.Namespace) -> int:
    if args.dtype not in _DTYPES:
        raise ConfigError(f"unknown dtype {args.dtype!r}, pick one of {sorted(_DTYPES)}")
    state = toy.make_state(seed=args.seed, dtype=_DTYPES[args.dtype])
    toy.save_state(args.out, state)
    print(f"wrote toy checkpoint with {len(state)} tensors to {args.out}")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    axes = _parse_axis_args(args.axis or [])
    if args.toy_axes:
        axes = {**toy.channel_axes(), **axes}
    manifest = convert.export_checkpoint(
        args.checkpoint, args.qmt, args.manifest, model_id=args.model_id, channel_axes=axes
    )
    print(
        f"exported {len(manifest.tensors)} tensors to {args.qmt} "
        f"({len(manifest.skipped)} skipped), manifest at {args.manifest}"
    )
    return 0


def cmd_import(args: argparse.Namespace) -> int:
    out = args.out if args.out is not None else args.checkpoint
    convert.import_quantized(args.qmq, args.manifest, args.checkpoint, out_path=out)
    print(f"restored checkpoint written to {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = evalq.EvalConfig(seed=args.seed, n_samples=args.samples)
    row = evalq.eval_quality(args.checkpoint, cfg, model_id=args.model_id)
    if args.json:
        print(json.dumps(row, indent=2))
    else:
        print(evalq.format_table([row]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmbridge")
    parser.add_argument("--version", action="version", version=f"qmbridge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-toy", help="write a seeded toy checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dtype", default="float32")
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("export", help="checkpoint -> QMT + manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--qmt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model-id", default="model", dest="model_id")
    p.add_argument("--axis", action="append", metavar="NAME=AXIS", help="output-feature axis override")
    p.add_argument("--toy-axes", action="store_true", dest="toy_axes", help="use the toy model's axis map")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("import", help="QMQ + manifest -> restored checkpoint")
    p.add_argument("--qmq", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None, help="defaults to rewriting --checkpoint in place")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("eval", help="score a checkpoint on the synthetic task")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--model-id", default="toy", dest="model_id")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError, ManifestMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, IoError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())
