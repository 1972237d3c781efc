"""Adaptive stationary/non-stationary attention (ASNA).

One block runs two multi-head score branches over the same T×D token grid:
a *stationary* branch whose queries/keys come from normalized-path tokens and
a *non-stationary* branch whose queries/keys come from raw-path tokens.  A
sigmoid gate, computed per query token and per head from the concatenated
token pair, convexly mixes the two row-stochastic score matrices, so the
fused matrix stays row-stochastic.  Values are always projected from the
stationary tokens, keeping the aggregated content in one embedding space.

Both paths are then updated transformer-style: the stationary path gets
residual + FFN with layer norms, the non-stationary path gets a residual over
an FFN of the fused attention output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .tensor import (
    Tensor,
    concat_features,
    concat_last,
    dropout,
    gelu,
    index_select,
    layer_norm,
    matmul,
    mul,
    narrow,
    sigmoid,
    softmax_rows,
    stack,
    transpose,
)

__all__ = [
    "FfnParams",
    "LayerNormParams",
    "AsnaParams",
    "AsnaDiag",
    "AsnaOutput",
    "init_asna_params",
    "branch_scores",
    "compute_gate",
    "fused_attention",
    "asna_forward",
]


@dataclass
class FfnParams:
    w1: Tensor  # D×D_ff
    b1: Tensor  # D_ff
    w2: Tensor  # D_ff×D
    b2: Tensor  # D


@dataclass
class LayerNormParams:
    gain: Tensor  # D
    bias: Tensor  # D


@dataclass
class AsnaParams:
    """Weights of one ASNA block.

    Query/key projections are packed across heads as D×D matrices; head h
    owns columns [h·d_h, (h+1)·d_h) with d_h = D/heads.  The value and output
    projections are shared by both branches.
    """

    heads: int
    dropout: float
    w_q_sta: Tensor  # D×D
    w_k_sta: Tensor
    w_q_non: Tensor
    w_k_non: Tensor
    w_v: Tensor  # D×D, projects stationary tokens only
    w_o: Tensor  # D×D
    w_g: Tensor  # 2D×heads
    b_g: Tensor  # heads
    ffn_sta: FfnParams
    ffn_non: FfnParams
    ln_attn: LayerNormParams  # after the gated attention residual
    ln_sta: LayerNormParams  # after the stationary FFN residual
    ln_non: LayerNormParams  # after the non-stationary residual

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.w_q_sta", self.w_q_sta
        yield f"{prefix}.w_k_sta", self.w_k_sta
        yield f"{prefix}.w_q_non", self.w_q_non
        yield f"{prefix}.w_k_non", self.w_k_non
        yield f"{prefix}.w_v", self.w_v
        yield f"{prefix}.w_o", self.w_o
        yield f"{prefix}.w_g", self.w_g
        yield f"{prefix}.b_g", self.b_g
        for tag, ffn in (("ffn_sta", self.ffn_sta), ("ffn_non", self.ffn_non)):
            yield f"{prefix}.{tag}.w1", ffn.w1
            yield f"{prefix}.{tag}.b1", ffn.b1
            yield f"{prefix}.{tag}.w2", ffn.w2
            yield f"{prefix}.{tag}.b2", ffn.b2
        for tag, ln in (
            ("ln_attn", self.ln_attn),
            ("ln_sta", self.ln_sta),
            ("ln_non", self.ln_non),
        ):
            yield f"{prefix}.{tag}.gain", ln.gain
            yield f"{prefix}.{tag}.bias", ln.bias


@dataclass
class AsnaDiag:
    """Detached attention/gate maps for export and inspection."""

    a_sta: np.ndarray  # heads×T×T
    a_non: np.ndarray  # heads×T×T
    gate: np.ndarray  # T×heads


@dataclass
class AsnaOutput:
    z_sta: Tensor  # T×D, updated stationary tokens
    z_non: Tensor  # T×D, updated non-stationary tokens
    diag: AsnaDiag | None = None


def _param(rng: np.random.Generator, rows: int, cols: int) -> Tensor:
    return Tensor(rng.normal(0.0, 1.0 / np.sqrt(rows), size=(rows, cols)), requires_grad=True)


def init_asna_params(
    rng: np.random.Generator, d_model: int, heads: int, d_ff: int, p_drop: float
) -> AsnaParams:
    if d_model % heads != 0:
        raise ValueError(f"d_model {d_model} must be divisible by heads {heads}")

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    def ffn():
        return FfnParams(
            w1=_param(rng, d_model, d_ff),
            b1=zeros(d_ff),
            w2=_param(rng, d_ff, d_model),
            b2=zeros(d_model),
        )

    return AsnaParams(
        heads=heads,
        dropout=p_drop,
        w_q_sta=_param(rng, d_model, d_model),
        w_k_sta=_param(rng, d_model, d_model),
        w_q_non=_param(rng, d_model, d_model),
        w_k_non=_param(rng, d_model, d_model),
        w_v=_param(rng, d_model, d_model),
        w_o=_param(rng, d_model, d_model),
        w_g=_param(rng, 2 * d_model, heads),
        b_g=zeros(heads),  # gate starts neutral at 0.5
        ffn_sta=ffn(),
        ffn_non=ffn(),
        ln_attn=LayerNormParams(ones(d_model), zeros(d_model)),
        ln_sta=LayerNormParams(ones(d_model), zeros(d_model)),
        ln_non=LayerNormParams(ones(d_model), zeros(d_model)),
    )


def branch_scores(z: Tensor, w_q: Tensor, w_k: Tensor, heads: int) -> Tensor:
    """Row-stochastic attention scores, one T×T matrix per head.

    Head h: softmax((z·W_Q^h)(z·W_K^h)ᵀ / √d_h) with d_h = D/heads.
    ``z`` may carry leading batch dims: (..., T, D) -> (..., heads, T, T).
    """
    d_h = z.shape[-1] // heads
    scale = 1.0 / np.sqrt(d_h)
    q = matmul(z, w_q)
    k = matmul(z, w_k)
    per_head = []
    for h in range(heads):
        qh = narrow(q, -1, h * d_h, (h + 1) * d_h)
        kh = narrow(k, -1, h * d_h, (h + 1) * d_h)
        per_head.append(softmax_rows(matmul(qh, transpose(kh)) * scale))
    return stack(per_head, axis=-3)


def compute_gate(z_sta: Tensor, z_non: Tensor, w_g: Tensor, b_g: Tensor) -> Tensor:
    """T×heads sigmoid gate from the concatenated token pair.

    Entry (t, h) weights the non-stationary branch for query row t of head h
    and is broadcast over the key axis.
    """
    return sigmoid(matmul(concat_features(z_sta, z_non), w_g) + b_g)


def fused_attention(
    a_sta: Tensor,
    a_non: Tensor,
    gate: Tensor,
    z_sta: Tensor,
    w_v: Tensor,
    w_o: Tensor,
) -> Tensor:
    """Gate-mixed attention:  per head, ((1−G)⊙A_sta + G⊙A_non)·(z_sta·W_V).

    Gate columns broadcast across keys, so each fused row stays a convex
    combination of row-stochastic rows.  Head outputs are concatenated and
    projected by W_O; values come from the stationary tokens only.  Leading
    batch dims pass through.
    """
    heads = a_sta.shape[-3]
    d_h = z_sta.shape[-1] // heads
    v = matmul(z_sta, w_v)
    head_outs = []
    for h in range(heads):
        g_col = narrow(gate, -1, h, h + 1)  # (..., T, 1), broadcast over keys
        mixed = mul(1.0 - g_col, index_select(a_sta, h, axis=-3)) + mul(
            g_col, index_select(a_non, h, axis=-3)
        )
        head_outs.append(matmul(mixed, narrow(v, -1, h * d_h, (h + 1) * d_h)))
    return matmul(concat_last(head_outs), w_o)


def _ffn(x: Tensor, p: FfnParams, p_drop: float, rng, train_mode: bool) -> Tensor:
    hidden = dropout(gelu(matmul(x, p.w1) + p.b1), p_drop, rng, train_mode)
    return matmul(hidden, p.w2) + p.b2


def asna_forward(
    z_sta: Tensor,
    z_non: Tensor,
    params: AsnaParams,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    gate_override: float | None = None,
    want_diag: bool = False,
) -> AsnaOutput:
    """Run one ASNA block over a T×D token pair (leading batch dims allowed).

    ``gate_override`` pins every gate entry to a constant (used by the
    ablation wiring: 0 keeps only the stationary branch, 1 only the
    non-stationary one, 0.5 freezes the mix).
    """
    a_sta = branch_scores(z_sta, params.w_q_sta, params.w_k_sta, params.heads)
    a_non = branch_scores(z_non, params.w_q_non, params.w_k_non, params.heads)
    if gate_override is None:
        gate = compute_gate(z_sta, z_non, params.w_g, params.b_g)
    else:
        gate = Tensor(np.full(z_sta.shape[:-1] + (params.heads,), float(gate_override)))

    fused = fused_attention(a_sta, a_non, gate, z_sta, params.w_v, params.w_o)

    z_tmp = layer_norm(
        z_sta + dropout(fused, params.dropout, rng, train_mode),
        params.ln_attn.gain,
        params.ln_attn.bias,
    )
    z_sta_out = layer_norm(
        z_tmp + _ffn(z_tmp, params.ffn_sta, params.dropout, rng, train_mode),
        params.ln_sta.gain,
        params.ln_sta.bias,
    )
    z_non_out = layer_norm(
        z_non + _ffn(fused, params.ffn_non, params.dropout, rng, train_mode),
        params.ln_non.gain,
        params.ln_non.bias,
    )

    diag = None
    if want_diag:
        diag = AsnaDiag(
            a_sta=a_sta.data.copy(), a_non=a_non.data.copy(), gate=gate.data.copy()
        )
    return AsnaOutput(z_sta=z_sta_out, z_non=z_non_out, diag=diag)
