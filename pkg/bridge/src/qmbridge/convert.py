"""Checkpoint export to QMT and quantized import back from QMQ.

The manifest JSON written next to every export is the contract between the
two directions: it records which framework tensors went into the container,
under which name, with which channel axis, and what dtype they must come
back as. Import refuses to guess; any disagreement between manifest, QMQ,
and checkpoint is a hard error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import container, toy
from .errors import ConfigError, IoError, ManifestMismatch, ValidationError

MANIFEST_VERSION = 1

# name fragments that mark tensors kept at full precision even when 2-D
EXCLUDED_NAME_PARTS = ("embed", "norm")


@dataclass
class TensorEntry:
    qmt_name: str
    channel_axis: int
    dtype: str
    dims: tuple[int, ...]


@dataclass
class TensorManifest:
    """Maps framework tensor names to container entries, plus what was skipped."""

    model_id: str
    tensors: dict[str, TensorEntry] = field(default_factory=dict)
    skipped: list[dict[str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        qmt_names = [e.qmt_name for e in self.tensors.values()]
        if len(set(qmt_names)) != len(qmt_names):
            raise ValidationError("manifest name map is not a bijection")

    def qmt_to_framework(self) -> dict[str, str]:
        return {e.qmt_name: fw for fw, e in self.tensors.items()}

    def save(self, path: str | Path) -> None:
        doc = {
            "format_version": MANIFEST_VERSION,
            "model_id": self.model_id,
            "tensors": {
                fw: {
                    "qmt_name": e.qmt_name,
                    "channel_axis": e.channel_axis,
                    "dtype": e.dtype,
                    "dims": list(e.dims),
                }
                for fw, e in self.tensors.items()
            },
            "skipped": self.skipped,
        }
        try:
            Path(path).write_text(json.dumps(doc, indent=2) + "\n")
        except OSError as exc:
            raise IoError(f"cannot write manifest {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "TensorManifest":
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise IoError(f"cannot read manifest {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"manifest {path} is not valid JSON: {exc}") from exc
        if doc.get("format_version") != MANIFEST_VERSION:
            raise ValidationError(f"unsupported manifest version {doc.get('format_version')}")
        tensors = {
            fw: TensorEntry(
                qmt_name=e["qmt_name"],
                channel_axis=int(e["channel_axis"]),
                dtype=e["dtype"],
                dims=tuple(int(d) for d in e["dims"]),
            )
            for fw, e in doc["tensors"].items()
        }
        return cls(model_id=doc["model_id"], tensors=tensors, skipped=list(doc.get("skipped", [])))


def _is_excluded(name: str) -> bool:
    low = name.lower()
    return any(part in low for part in EXCLUDED_NAME_PARTS)


def export_checkpoint(
    checkpoint_path: str | Path,
    qmt_path: str | Path,
    manifest_path: str | Path,
    model_id: str = "model",
    channel_axes: dict[str, int] | None = None,
) -> TensorManifest:
    """Write the checkpoint's 2-D weight matrices to a QMT file plus manifest.

    Values are widened to float32 (exact for float16/bfloat16 sources).
    `channel_axes` names the output-feature axis per tensor; unlisted
    tensors default to axis 0, the usual (out, in) weight layout.
    Everything not exported is listed under `skipped` with a reason.
    """
    channel_axes = channel_axes or {}
    state = toy.load_state(checkpoint_path)
    manifest = TensorManifest(model_id=model_id)
    records: list[container.FloatRecord] = []
    for name, tensor in state.items():
        if not isinstance(tensor, torch.Tensor):
            manifest.skipped.append({"name": name, "reason": "not a tensor"})
            continue
        if not tensor.dtype.is_floating_point:
            manifest.skipped.append({"name": name, "reason": f"non-float dtype {tensor.dtype}"})
            continue
        if tensor.dim() != 2:
            manifest.skipped.append(
                {"name": name, "reason": f"rank {tensor.dim()}, only 2-D matrices are converted"}
            )
            continue
        if _is_excluded(name):
            manifest.skipped.append({"name": name, "reason": "excluded by name rule"})
            continue
        axis = int(channel_axes.get(name, 0))
        if axis not in (0, 1):
            raise ConfigError(f"{name}: channel axis must be 0 or 1, got {axis}")
        data = tensor.detach().to(torch.float32).contiguous().numpy().reshape(-1)
        dims = tuple(tensor.shape)
        records.append(container.FloatRecord(name=name, dims=dims, channel_axis=axis, data=data))
        manifest.tensors[name] = TensorEntry(
            qmt_name=name,
            channel_axis=axis,
            dtype=str(tensor.dtype).removeprefix("torch."),
            dims=dims,
        )
    # revalidate the bijection now that entries are in
    TensorManifest(model_id=model_id, tensors=manifest.tensors)
    container.write_qmt(qmt_path, records)
    manifest.save(manifest_path)
    return manifest


def _torch_dtype(name: str) -> torch.dtype:
    dtype = getattr(torch, name, None)
    if not isinstance(dtype, torch.dtype):
        raise ConfigError(f"manifest names unknown dtype {name!r}")
    return dtype


def import_quantized(
    qmq_path: str | Path,
    manifest_path: str | Path,
    checkpoint_path: str | Path,
    out_path: str | Path | None = None,
) -> None:
    """Replace manifest-listed tensors in a checkpoint with dequantized values.

    Tensors outside the manifest pass through untouched. Restored tensors
    are cast back to the dtype the manifest recorded. Without `out_path`
    the checkpoint is rewritten in place.
    """
    manifest = TensorManifest.load(manifest_path)
    records = {rec.name: rec for rec in container.read_qmq(qmq_path)}

    missing = [e.qmt_name for e in manifest.tensors.values() if e.qmt_name not in records]
    if missing:
        raise ManifestMismatch(
            f"QMQ file is missing tensors listed in the manifest: {', '.join(missing)}"
        )
    known = {e.qmt_name for e in manifest.tensors.values()}
    extra = [name for name in records if name not in known]
    if extra:
        raise ManifestMismatch(f"QMQ file holds tensors absent from the manifest: {', '.join(extra)}")

    state = toy.load_state(checkpoint_path)
    new_state = dict(state)
    for fw_name, entry in manifest.tensors.items():
        if fw_name not in state:
            raise ManifestMismatch(f"checkpoint has no tensor named {fw_name}")
        rec = records[entry.qmt_name]
        if tuple(rec.dims) != entry.dims:
            raise ManifestMismatch(
                f"{entry.qmt_name}: QMQ dims {rec.dims} != manifest dims {entry.dims}"
            )
        if rec.channel_axis != entry.channel_axis:
            raise ManifestMismatch(
                f"{entry.qmt_name}: QMQ channel axis {rec.channel_axis} != manifest {entry.channel_axis}"
            )
        values = rec.dequantize().reshape(rec.dims)
        restored = torch.from_numpy(np.ascontiguousarray(values)).to(_torch_dtype(entry.dtype))
        new_state[fw_name] = restored
    toy.save_state(out_path if out_path is not None else checkpoint_path, new_state)
