"""Full forecaster: dual-path embedding, stacked ASNA layers, prediction head.

Pipeline (full mode): per-instance normalization -> patchify/embed both paths
-> patch-dependency layers (ASNA per channel over N patch tokens) -> temporal
aggregation (learned N->N' mixing per path) -> channel-relationship layers
(ASNA per aggregated patch over C channel tokens) -> linear head on the
flattened stationary branch -> de-normalization back to the input scale.

Ablation modes rewire this pipeline: ``no_sta``/``no_non``/``no_gate`` pin
the ASNA gate to 1/0/0.5, ``no_pd`` drops the patch layers, ``no_cr`` drops
aggregation plus channel layers (the head then consumes all N patches), and
``cr_then_pd`` aggregates first and runs channel layers before patch layers.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .asna import AsnaDiag, AsnaParams, asna_forward, init_asna_params
from .norm import NormStats, in_denorm, in_norm
from .patching import PatchConfig, embed, n_patches, patchify
from .tensor import ShapeError, Tensor, matmul, reshape, swap_leading

__all__ = [
    "ABLATIONS",
    "ModelConfig",
    "SeesawModel",
    "ModelDiag",
    "CheckpointError",
    "patch_dependency_layer",
    "temporal_aggregate",
    "channel_relationship_layer",
    "flatten_predict",
    "save_checkpoint",
    "load_checkpoint",
]

ABLATIONS = ("full", "no_sta", "no_non", "no_gate", "no_pd", "no_cr", "cr_then_pd")

# gate pinning per ablation mode; 1.0 silences the stationary branch scores
_GATE_OVERRIDES = {"no_sta": 1.0, "no_non": 0.0, "no_gate": 0.5}


@dataclass
class ModelConfig:
    """Every knob of the forecaster; fully determines the parameter set.

    ``d_ff=0`` resolves to 4·d_model and ``n_agg=0`` to ceil(N/2), so a
    serialized config always carries resolved values.
    """

    n_channels: int
    seq_len: int
    horizon: int
    patch_len: int = 16
    stride: int = 8
    d_model: int = 64
    heads: int = 4
    d_ff: int = 0
    dropout: float = 0.1
    n_patch_layers: int = 2
    n_channel_layers: int = 1
    n_agg: int = 0
    ablation: str = "full"
    seed: int = 0

    def __post_init__(self):
        if self.d_ff == 0:
            self.d_ff = 4 * self.d_model
        if self.n_agg == 0:
            self.n_agg = math.ceil(self.n_patches / 2)
        self.validate()

    @property
    def n_patches(self) -> int:
        return n_patches(self.seq_len, self.patch_config)

    @property
    def patch_config(self) -> PatchConfig:
        return PatchConfig(self.patch_len, self.stride, self.d_model)

    def validate(self) -> None:
        if self.n_channels < 1 or self.seq_len < 2 or self.horizon < 1:
            raise ValueError("n_channels >= 1, seq_len >= 2 and horizon >= 1 required")
        if self.patch_len > self.seq_len:
            raise ValueError(
                f"patch_len {self.patch_len} exceeds seq_len {self.seq_len}"
            )
        if self.d_model % self.heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if not 1 <= self.n_agg <= self.n_patches:
            raise ValueError(
                f"n_agg {self.n_agg} must lie in [1, {self.n_patches}]"
            )
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; pick one of {ABLATIONS}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.n_patch_layers < 0 or self.n_channel_layers < 0:
            raise ValueError("layer counts must be >= 0")


@dataclass
class _EmbedParams:
    w: Tensor  # P×D
    pos: Tensor  # N×D


@dataclass
class ModelDiag:
    """Per-forward diagnostics: normalization stats plus attention/gate maps."""

    stats: NormStats
    patch: list = field(default_factory=list)  # [layer][channel] -> AsnaDiag
    channel: list = field(default_factory=list)  # [layer][patch] -> AsnaDiag


def patch_dependency_layer(
    p_sta: Tensor,
    p_non: Tensor,
    params: AsnaParams,
    train_mode: bool = False,
    rng=None,
    gate_override: float | None = None,
    diag_out: list[AsnaDiag] | None = None,
) -> tuple[Tensor, Tensor]:
    """ASNA over the patch axis, independently per channel, shared weights.

    Channels ride along as the batch dim of one block invocation; the block's
    math never mixes batch entries, so this equals per-channel calls.
    """
    res = asna_forward(
        p_sta,
        p_non,
        params,
        train_mode=train_mode,
        rng=rng,
        gate_override=gate_override,
        want_diag=diag_out is not None,
    )
    if diag_out is not None:
        for c in range(p_sta.shape[0]):
            diag_out.append(
                AsnaDiag(res.diag.a_sta[c], res.diag.a_non[c], res.diag.gate[c])
            )
    return res.z_sta, res.z_non


def temporal_aggregate(p: Tensor, w_agg: Tensor) -> Tensor:
    """Learned linear mixing along the patch axis: C×N×D -> C×N'×D."""
    if w_agg.shape[1] != p.shape[1]:
        raise ShapeError(
            f"temporal_aggregate: W_agg {w_agg.shape} does not match {p.shape[1]} patches"
        )
    return matmul(w_agg, p)


def channel_relationship_layer(
    q_sta: Tensor,
    q_non: Tensor,
    params: AsnaParams,
    train_mode: bool = False,
    rng=None,
    gate_override: float | None = None,
    diag_out: list[AsnaDiag] | None = None,
) -> tuple[Tensor, Tensor]:
    """ASNA over the C channel tokens, independently per patch, shared weights."""
    res = asna_forward(
        swap_leading(q_sta),  # (N', C, D): patches become the batch dim
        swap_leading(q_non),
        params,
        train_mode=train_mode,
        rng=rng,
        gate_override=gate_override,
        want_diag=diag_out is not None,
    )
    if diag_out is not None:
        for n in range(q_sta.shape[1]):
            diag_out.append(
                AsnaDiag(res.diag.a_sta[n], res.diag.a_non[n], res.diag.gate[n])
            )
    return swap_leading(res.z_sta), swap_leading(res.z_non)


def flatten_predict(q_sta: Tensor, w_head: Tensor, b_head: Tensor) -> Tensor:
    """Flatten each channel's T×D latent and apply the shared linear head."""
    c, t, d = q_sta.shape
    if w_head.shape[0] != t * d:
        raise ShapeError(
            f"flatten_predict: head expects {w_head.shape[0]} features, latent has {t * d}"
        )
    return matmul(reshape(q_sta, (c, t * d)), w_head) + b_head


class SeesawModel:
    """Parameter container plus the forward pass for one ModelConfig."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        n = cfg.n_patches
        d = cfg.d_model

        def param(rows, cols, scale=None):
            s = scale if scale is not None else 1.0 / np.sqrt(rows)
            return Tensor(rng.normal(0.0, s, size=(rows, cols)), requires_grad=True)

        self.embed_sta = _EmbedParams(w=param(cfg.patch_len, d), pos=param(n, d, scale=0.02))
        self.embed_non = _EmbedParams(w=param(cfg.patch_len, d), pos=param(n, d, scale=0.02))

        self.patch_layers: list[AsnaParams] = []
        if cfg.ablation != "no_pd":
            self.patch_layers = [
                init_asna_params(rng, d, cfg.heads, cfg.d_ff, cfg.dropout)
                for _ in range(cfg.n_patch_layers)
            ]

        self.agg_sta: Tensor | None = None
        self.agg_non: Tensor | None = None
        self.channel_layers: list[AsnaParams] = []
        if cfg.ablation != "no_cr":
            self.agg_sta = param(cfg.n_agg, n, scale=1.0 / np.sqrt(n))
            self.agg_non = param(cfg.n_agg, n, scale=1.0 / np.sqrt(n))
            self.channel_layers = [
                init_asna_params(rng, d, cfg.heads, cfg.d_ff, cfg.dropout)
                for _ in range(cfg.n_channel_layers)
            ]

        head_in = (n if cfg.ablation == "no_cr" else cfg.n_agg) * d
        self.head_w = param(head_in, cfg.horizon)
        self.head_b = Tensor(np.zeros(cfg.horizon), requires_grad=True)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = [
            ("embed_sta.w", self.embed_sta.w),
            ("embed_sta.pos", self.embed_sta.pos),
            ("embed_non.w", self.embed_non.w),
            ("embed_non.pos", self.embed_non.pos),
        ]
        for i, layer in enumerate(self.patch_layers):
            out.extend(layer.named(f"patch_layer{i}"))
        if self.agg_sta is not None:
            out.append(("agg_sta", self.agg_sta))
            out.append(("agg_non", self.agg_non))
        for i, layer in enumerate(self.channel_layers):
            out.extend(layer.named(f"channel_layer{i}"))
        out.append(("head.w", self.head_w))
        out.append(("head.b", self.head_b))
        return out

    def parameter_count(self) -> int:
        return sum(t.size for _, t in self.named_parameters())

    def forward(
        self,
        x,
        train_mode: bool = False,
        rng: np.random.Generator | None = None,
        gate_override: float | None = None,
        want_diag: bool = False,
    ) -> tuple[Tensor, ModelDiag | None]:
        """Forecast one C×L window; returns (C×H forecast in raw scale, diag)."""
        cfg = self.cfg
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.shape != (cfg.n_channels, cfg.seq_len):
            raise ShapeError(
                f"forward: expected input shape {(cfg.n_channels, cfg.seq_len)}, got {x.shape}"
            )
        if gate_override is None:
            gate_override = _GATE_OVERRIDES.get(cfg.ablation)

        x_sta, stats = in_norm(x)
        pcfg = cfg.patch_config
        p_sta = embed(patchify(x_sta, pcfg), self.embed_sta.w, self.embed_sta.pos).values
        p_non = embed(patchify(x, pcfg), self.embed_non.w, self.embed_non.pos).values

        diag = ModelDiag(stats=stats) if want_diag else None
        kw = dict(train_mode=train_mode, rng=rng, gate_override=gate_override)

        def run_patch_layers(s, ns):
            for layer in self.patch_layers:
                sink = [] if diag is not None else None
                s, ns = patch_dependency_layer(s, ns, layer, diag_out=sink, **kw)
                if diag is not None:
                    diag.patch.append(sink)
            return s, ns

        def run_channel_layers(s, ns):
            s = temporal_aggregate(s, self.agg_sta)
            ns = temporal_aggregate(ns, self.agg_non)
            for layer in self.channel_layers:
                sink = [] if diag is not None else None
                s, ns = channel_relationship_layer(s, ns, layer, diag_out=sink, **kw)
                if diag is not None:
                    diag.channel.append(sink)
            return s, ns

        if cfg.ablation == "cr_then_pd":
            p_sta, p_non = run_channel_layers(p_sta, p_non)
            p_sta, p_non = run_patch_layers(p_sta, p_non)
        elif cfg.ablation == "no_cr":
            p_sta, p_non = run_patch_layers(p_sta, p_non)
        else:
            p_sta, p_non = run_patch_layers(p_sta, p_non)
            p_sta, p_non = run_channel_layers(p_sta, p_non)

        y_norm = flatten_predict(p_sta, self.head_w, self.head_b)
        return in_denorm(y_norm, stats), diag


# ---------------------------------------------------------------------------
# checkpoint format
#
# Single binary file, little-endian throughout:
#   magic            10 bytes  b"SEESAWCKPT"
#   version          u32       currently 1
#   config length    u32
#   config           JSON (utf-8, sorted keys) of the ModelConfig fields
#   record count     u32
#   per parameter record:
#     name length    u32
#     name           utf-8
#     ndim           u32
#     dims           u32 × ndim
#     data           float64 little-endian, row-major
# Records appear in named_parameters() order; save/load round-trips bit-exactly.

CHECKPOINT_MAGIC = b"SEESAWCKPT"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is malformed or does not match the model."""


def save_checkpoint(model: SeesawModel, path) -> None:
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    cfg_json = json.dumps(asdict(model.cfg), sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(cfg_json)))
    parts.append(cfg_json)
    named = model.named_parameters()
    parts.append(struct.pack("<I", len(named)))
    for name, t in named:
        nb = name.encode("utf-8")
        parts.append(struct.pack("<I", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", t.data.ndim))
        parts.append(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise CheckpointError("checkpoint truncated")
        chunk = self.blob[self.off : self.off + n]
        self.off += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path) -> SeesawModel:
    with open(path, "rb") as fh:
        rd = _Reader(fh.read())
    if rd.take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
    version = rd.u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    cfg = ModelConfig(**json.loads(rd.take(rd.u32()).decode("utf-8")))
    model = SeesawModel(cfg)
    by_name = dict(model.named_parameters())
    count = rd.u32()
    if count != len(by_name):
        raise CheckpointError(
            f"{path}: {count} parameter records, model has {len(by_name)}"
        )
    for _ in range(count):
        name = rd.take(rd.u32()).decode("utf-8")
        ndim = rd.u32()
        shape = struct.unpack(f"<{ndim}I", rd.take(4 * ndim))
        data = np.frombuffer(rd.take(8 * int(np.prod(shape))), dtype="<f8").reshape(shape)
        if name not in by_name:
            raise CheckpointError(f"{path}: unexpected parameter {name!r}")
        t = by_name[name]
        if t.data.shape != data.shape:
            raise CheckpointError(
                f"{path}: parameter {name!r} has shape {data.shape}, expected {t.data.shape}"
            )
        t.data = data.astype(np.float64).copy()
    return model
