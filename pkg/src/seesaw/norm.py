"""Reversible per-instance, per-channel normalization and its inverse.

Each input window is standardized with its own per-channel statistics and the
forecast is mapped back with the same statistics.  The statistics are
parameter-free: population standard deviation, clamped from below so constant
channels stay finite and the roundtrip is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor

__all__ = ["NormStats", "in_norm", "in_denorm", "STD_FLOOR"]

STD_FLOOR = 1e-5


@dataclass
class NormStats:
    """Per-channel mean and (clamped) population std captured by in_norm."""

    mean: np.ndarray  # (C,)
    std: np.ndarray  # (C,), each >= STD_FLOOR

    @property
    def n_channels(self) -> int:
        return self.mean.shape[0]


def in_norm(x: Tensor) -> tuple[Tensor, NormStats]:
    """Standardize each channel of a C×L window with its own statistics.

    Returns the normalized window (a constant, not differentiated: it is
    data preparation upstream of every parameter) and the stats needed to
    undo it.  Population std is used and clamped at STD_FLOOR, so constant
    channels map to zeros.
    """
    xv = x.data
    if xv.ndim != 2:
        raise ShapeError(f"in_norm: expected a C×L matrix, got shape {x.shape}")
    if xv.shape[1] < 2:
        raise ValueError(f"in_norm: window length must be >= 2, got {xv.shape[1]}")
    mean = xv.mean(axis=1)
    std = np.maximum(xv.std(axis=1), STD_FLOOR)
    x_sta = (xv - mean[:, None]) / std[:, None]
    return Tensor(x_sta), NormStats(mean=mean, std=std)


def in_denorm(y: Tensor, stats: NormStats) -> Tensor:
    """Map a normalized C×H forecast back to the original scale."""
    if y.shape[0] != stats.n_channels:
        raise ShapeError(
            f"in_denorm: forecast has {y.shape[0]} channels, stats have {stats.n_channels}"
        )
    std = Tensor(stats.std[:, None])
    mean = Tensor(stats.mean[:, None])
    return y * std + mean
