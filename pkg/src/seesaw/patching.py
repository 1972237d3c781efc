"""Overlapping patch extraction and token embedding.

Each channel of a C×L window is cut into length-P windows at stride S.  The
tail is padded by repeating the final value S times, which adds exactly one
extra window, so N = floor((L−P)/S) + 2 always holds for S <= P <= L.  Every
original index lands in at least one window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, add, matmul

__all__ = ["PatchConfig", "PatchTokens", "n_patches", "patchify", "embed"]


@dataclass
class PatchConfig:
    patch_len: int  # P
    stride: int  # S, 1 <= S <= P
    embed_dim: int  # D

    def __post_init__(self):
        if self.patch_len < 1 or self.stride < 1 or self.embed_dim < 1:
            raise ValueError("patch_len, stride and embed_dim must be positive")
        if self.stride > self.patch_len:
            raise ValueError(
                f"stride {self.stride} must not exceed patch_len {self.patch_len}"
            )


@dataclass
class PatchTokens:
    values: Tensor  # C×N×D
    n_patches: int


def n_patches(seq_len: int, cfg: PatchConfig) -> int:
    """Window count under the repeat-last tail padding rule."""
    if cfg.patch_len > seq_len:
        raise ValueError(
            f"patch_len {cfg.patch_len} exceeds window length {seq_len}"
        )
    return (seq_len - cfg.patch_len) // cfg.stride + 2


def patchify(x: Tensor, cfg: PatchConfig) -> Tensor:
    """Slice a C×L window into C×N×P patches (window i covers [iS, iS+P)).

    The input is treated as a constant: patching happens upstream of every
    parameter, so no gradient is propagated to ``x``.
    """
    xv = x.data
    if xv.ndim != 2:
        raise ShapeError(f"patchify: expected a C×L matrix, got shape {x.shape}")
    c, seq_len = xv.shape
    n = n_patches(seq_len, cfg)
    padded = np.concatenate([xv, np.repeat(xv[:, -1:], cfg.stride, axis=1)], axis=1)
    out = np.empty((c, n, cfg.patch_len))
    for i in range(n):
        start = i * cfg.stride
        out[:, i, :] = padded[:, start : start + cfg.patch_len]
    return Tensor(out)


def embed(patches: Tensor, w_e: Tensor, pos: Tensor) -> PatchTokens:
    """Project C×N×P patches to C×N×D tokens: values[c,n] = patches[c,n]·W_e + pos[n].

    ``w_e`` (P×D) and the additive position table ``pos`` (N×D) are shared
    across channels.
    """
    _, n, p = patches.shape
    if w_e.shape[0] != p:
        raise ShapeError(f"embed: W_e expects patch length {w_e.shape[0]}, got {p}")
    if pos.shape != (n, w_e.shape[1]):
        raise ShapeError(
            f"embed: pos table shape {pos.shape} does not match ({n}, {w_e.shape[1]})"
        )
    return PatchTokens(values=add(matmul(patches, w_e), pos), n_patches=n)
