"""Dual-path time series forecaster with gated stationary/non-stationary attention.

The package is self-contained: tensors, reverse-mode autodiff, the attention
blocks, training loop, data handling and a CLI all live here, on top of numpy
arrays only.
"""

from .asna import AsnaOutput, AsnaParams, asna_forward
from .data import DataBundle, RawSeries, SynthSpec, WindowDataset, build_bundle, load_csv, synth_generate
from .model import ModelConfig, SeesawModel, load_checkpoint, save_checkpoint
from .norm import NormStats, in_denorm, in_norm
from .patching import PatchConfig, embed, patchify
from .tensor import Tape, Tensor
from .training import AdamState, TrainConfig, TrainReport, adam_step, evaluate, fredf_loss, mse_loss, train

__all__ = [
    "Tensor",
    "Tape",
    "NormStats",
    "in_norm",
    "in_denorm",
    "PatchConfig",
    "patchify",
    "embed",
    "AsnaParams",
    "AsnaOutput",
    "asna_forward",
    "ModelConfig",
    "SeesawModel",
    "save_checkpoint",
    "load_checkpoint",
    "TrainConfig",
    "TrainReport",
    "AdamState",
    "adam_step",
    "fredf_loss",
    "mse_loss",
    "train",
    "evaluate",
    "RawSeries",
    "WindowDataset",
    "DataBundle",
    "SynthSpec",
    "load_csv",
    "build_bundle",
    "synth_generate",
]

__version__ = "0.1.0"
