"""Tiny two-layer reference model used for end-to-end bridge checks.

Each layer holds two 8x4 weight matrices and a bias. The forward pass is

    h = tanh(x @ expand.T)      expand: (8, 4), output features on axis 0
    x = h @ reduce + bias       reduce: (8, 4), output features on axis 1

so a batch of 4-wide inputs stays 4-wide through both layers. The two
matrices deliberately place the output-feature axis differently; the
export manifest has to record that per tensor.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .errors import IoError

N_LAYERS = 2
WIDTH_IN = 4
WIDTH_HIDDEN = 8

WEIGHT_NAMES = tuple(
    f"layers.{i}.{kind}.weight" for i in range(N_LAYERS) for kind in ("expand", "reduce")
)
BIAS_NAMES = tuple(f"layers.{i}.bias" for i in range(N_LAYERS))


def channel_axes() -> dict[str, int]:
    """Output-feature axis per weight matrix."""
    return {name: (1 if ".reduce." in name else 0) for name in WEIGHT_NAMES}


def make_state(seed: int = 0, dtype: torch.dtype = torch.float32) -> dict[str, torch.Tensor]:
    rng = np.random.default_rng(seed)
    state: dict[str, torch.Tensor] = {}
    for name in WEIGHT_NAMES:
        w = rng.normal(0.0, 0.5, size=(WIDTH_HIDDEN, WIDTH_IN)).astype(np.float32)
        state[name] = torch.from_numpy(w).to(dtype)
    for name in BIAS_NAMES:
        b = rng.normal(0.0, 0.1, size=(WIDTH_IN,)).astype(np.float32)
        state[name] = torch.from_numpy(b).to(dtype)
    return state


def save_state(path: str | Path, state: dict[str, torch.Tensor]) -> None:
    try:
        torch.save(state, str(path))
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_state(path: str | Path) -> dict[str, torch.Tensor]:
    try:
        state = torch.load(str(path), map_location="cpu", weights_only=True)
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(state, dict):
        raise IoError(f"checkpoint {path} does not hold a state dict")
    return state


def forward(state: dict[str, torch.Tensor], x: torch.Tensor) -> torch.Tensor:
    """Run the model on a (batch, 4) input; computes in float32."""
    x = x.to(torch.float32)
    for i in range(N_LAYERS):
        expand = state[f"layers.{i}.expand.weight"].to(torch.float32)
        reduce = state[f"layers.{i}.reduce.weight"].to(torch.float32)
        bias = state[f"layers.{i}.bias"].to(torch.float32)
        x = torch.tanh(x @ expand.T) @ reduce + bias
    return x
