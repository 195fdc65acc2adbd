"""Magnitude-based outlier/inlier split of a weight tensor.

A single fraction rho picks the k = round(rho * N) largest-magnitude
elements of the whole tensor as outliers. Rounding is half-to-even and
ties in magnitude go to the smaller flat index, so the split is a pure
deterministic function of (values, rho).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tensor_store import WeightTensor


@dataclass(frozen=True)
class PartitionMask:
    tensor_name: str
    rho: float
    tau: float
    outlier_indices: np.ndarray  # sorted ascending, int64

    @property
    def n_outliers(self) -> int:
        return int(self.outlier_indices.size)

    def inlier_indices(self, n_elements: int) -> np.ndarray:
        mask = np.ones(n_elements, dtype=bool)
        mask[self.outlier_indices] = False
        return np.flatnonzero(mask)


def outlier_count(n_elements: int, rho: float) -> int:
    # round-half-to-even, e.g. rho*N = 2.5 -> 2, 3.5 -> 4
    return round(rho * n_elements)


def select_outliers(tensor: WeightTensor, rho: float) -> PartitionMask:
    if not (math.isfinite(rho) and 0.0 <= rho <= 1.0):
        raise ConfigError(f"rho must be in [0, 1], got {rho}")
    mag = np.abs(tensor.data)
    k = outlier_count(mag.size, rho)
    if k == 0:
        chosen = np.zeros(0, dtype=np.int64)
        tau = math.inf
    else:
        # stable sort on -|w|: equal magnitudes keep ascending index order
        order = np.argsort(-mag, kind="stable")
        chosen = np.sort(order[:k]).astype(np.int64)
        tau = float(mag[order[k - 1]])
    return PartitionMask(tensor_name=tensor.name, rho=float(rho), tau=tau, outlier_indices=chosen)
