"""Quality evaluation of a checkpoint on a deterministic synthetic task.

The toy model emits 4 logits; the task scores them against seeded random
class labels with cross-entropy. That gives a perplexity-style number and
an accuracy, enough to compare a checkpoint before and after a quantization
round trip. Identical checkpoints always score identically: the batch is a
pure function of the seed and the forward pass is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import toy
from .errors import ConfigError, IoError


@dataclass
class EvalConfig:
    seed: int = 0
    n_samples: int = 256

    def __post_init__(self) -> None:
        if self.n_samples <= 0:
            raise ConfigError(f"n_samples must be positive, got {self.n_samples}")


def synthetic_batch(cfg: EvalConfig) -> tuple[torch.Tensor, torch.Tensor]:
    rng = np.random.default_rng(cfg.seed)
    x = rng.normal(0.0, 1.0, size=(cfg.n_samples, toy.WIDTH_IN)).astype(np.float32)
    labels = rng.integers(0, toy.WIDTH_IN, size=cfg.n_samples)
    return torch.from_numpy(x), torch.from_numpy(labels.astype(np.int64))


def eval_quality(
    checkpoint_path: str | Path, cfg: EvalConfig | None = None, model_id: str = "toy"
) -> dict:
    """Score a checkpoint; returns one metrics row as a dict."""
    cfg = cfg or EvalConfig()
    if not Path(checkpoint_path).exists():
        raise IoError(f"checkpoint not found: {checkpoint_path}")
    state = toy.load_state(checkpoint_path)
    x, labels = synthetic_batch(cfg)
    with torch.no_grad():
        logits = toy.forward(state, x)
        logp = torch.log_softmax(logits.to(torch.float64), dim=1)
        nll = -logp[torch.arange(labels.size(0)), labels].mean()
        acc = (logits.argmax(dim=1) == labels).to(torch.float64).mean()
    return {
        "model": model_id,
        "samples": cfg.n_samples,
        "seed": cfg.seed,
        "ppl": float(torch.exp(nll)),
        "accuracy": float(acc),
    }


METRIC_COLUMNS = ("model", "samples", "seed", "ppl", "accuracy")


def format_table(rows: list[dict]) -> str:
    """Fixed-width metrics table, one row per evaluated checkpoint."""
    cells = [METRIC_COLUMNS]
    for row in rows:
        cells.append(
            tuple(
                f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c])
                for c in METRIC_COLUMNS
            )
        )
    widths = [max(len(r[i]) for r in cells) for i in range(len(METRIC_COLUMNS))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in cells]
    return "\n".join(lines)
