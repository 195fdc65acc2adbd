import subprocess
import sys

import numpy as np
import pytest
import torch

from qmbridge import toy


def _run(module: str, args, check: bool):
    proc = subprocess.run(
        [sys.executable, "-m", module, *args], capture_output=True, text=True
    )
    if check:
        assert proc.returncode == 0, f"{module} {' '.join(args)} failed:\n{proc.stderr}"
    return proc


@pytest.fixture
def nvmquant():
    """Run the quantizer CLI in a subprocess; the bridge only talks to it this way."""

    def runner(*args, check=True):
        return _run("nvmquant", args, check)

    return runner


@pytest.fixture
def qmbridge_cli():
    def runner(*args, check=True):
        return _run("qmbridge", args, check)

    return runner


@pytest.fixture
def toy_checkpoint(tmp_path):
    path = tmp_path / "toy.pt"
    toy.save_state(path, toy.make_state(seed=7))
    return path


def make_grid_state(seed: int = 11) -> dict[str, torch.Tensor]:
    """Toy weights on the 2^-7 grid with a +/-32767 entry in every channel.

    With rho=1 and 16-bit outlier codes the scale search lands exactly on
    2^-7 per channel (any smaller grid point would clip the max element),
    so quantization is an identity on these tensors.
    """
    rng = np.random.default_rng(seed)
    axes = toy.channel_axes()
    state: dict[str, torch.Tensor] = {}
    for name in toy.WEIGHT_NAMES:
        k = rng.integers(-32767, 32768, size=(toy.WIDTH_HIDDEN, toy.WIDTH_IN))
        sign = lambda: 1 if rng.random() < 0.5 else -1
        if axes[name] == 0:
            for row in range(toy.WIDTH_HIDDEN):
                k[row, rng.integers(0, toy.WIDTH_IN)] = 32767 * sign()
        else:
            for col in range(toy.WIDTH_IN):
                k[rng.integers(0, toy.WIDTH_HIDDEN), col] = 32767 * sign()
        state[name] = torch.from_numpy((k * 2.0**-7).astype(np.float32))
    for name in toy.BIAS_NAMES:
        state[name] = torch.from_numpy(rng.normal(size=toy.WIDTH_IN).astype(np.float32))
    return state


@pytest.fixture
def grid_checkpoint(tmp_path):
    path = tmp_path / "grid.pt"
    state = make_grid_state()
    toy.save_state(path, state)
    return path, state
