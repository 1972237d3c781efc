"""Analytic attention FLOP accounting.

Counting rules (fixed, documented):
  * a matmul of m×k by k×n costs 2·m·n·k FLOPs;
  * *score FLOPs* are the Q·Kᵀ products only — per attention site with T
    tokens that is 2·T²·D summed over heads; the dual-branch block computes
    two of them, a single-branch block one, so their score ratio is 2 by
    construction (the quadratic-in-T term the architecture doubles);
  * projections (Q, K per branch, plus shared V and output) and the gate
    projection are reported separately as supporting context.

Sites follow the model wiring: every patch-dependency layer runs C sites of
T=N tokens, every channel-relationship layer runs N' sites of T=C tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import ModelConfig

__all__ = ["FlopReport", "flop_report", "format_flop_report"]


def _matmul_flops(m: int, n: int, k: int) -> int:
    return 2 * m * n * k


@dataclass
class FlopReport:
    score_flops_dual: int  # both branches' Q·Kᵀ products
    score_flops_single: int  # one branch's Q·Kᵀ products
    proj_flops_dual: int  # Q,K for both branches + shared V, output
    proj_flops_single: int  # Q,K,V, output for one branch
    gate_flops: int  # gate projection (dual-branch only)
    patch_sites: int
    channel_sites: int

    @property
    def score_ratio(self) -> float:
        return self.score_flops_dual / self.score_flops_single

    @property
    def block_flops_dual(self) -> int:
        return self.score_flops_dual + self.proj_flops_dual + self.gate_flops

    @property
    def block_flops_single(self) -> int:
        return self.score_flops_single + self.proj_flops_single

    @property
    def block_ratio(self) -> float:
        return self.block_flops_dual / self.block_flops_single


def flop_report(cfg: ModelConfig) -> FlopReport:
    d = cfg.d_model
    sites: list[int] = []  # token count T of every attention site
    if cfg.ablation != "no_pd":
        sites += [cfg.n_patches] * (cfg.n_patch_layers * cfg.n_channels)
    patch_sites = len(sites)
    if cfg.ablation != "no_cr":
        sites += [cfg.n_channels] * (cfg.n_channel_layers * cfg.n_agg)
    channel_sites = len(sites) - patch_sites
    if not sites:
        raise ValueError("config has no attention sites to count")

    score_single = sum(_matmul_flops(t, t, d) for t in sites)
    # per site: Q and K projections per branch, V and output shared
    qk = sum(_matmul_flops(t, d, d) * 2 for t in sites)
    vo = sum(_matmul_flops(t, d, d) * 2 for t in sites)
    gate = sum(_matmul_flops(t, cfg.heads, 2 * d) for t in sites)
    return FlopReport(
        score_flops_dual=2 * score_single,
        score_flops_single=score_single,
        proj_flops_dual=2 * qk + vo,
        proj_flops_single=qk + vo,
        gate_flops=gate,
        patch_sites=patch_sites,
        channel_sites=channel_sites,
    )


def format_flop_report(cfg: ModelConfig, rep: FlopReport) -> str:
    lines = [
        f"attention sites: {rep.patch_sites} patch (T={cfg.n_patches}), "
        f"{rep.channel_sites} channel (T={cfg.n_channels})",
        f"score flops (Q.K^T products)   dual-branch: {rep.score_flops_dual}",
        f"score flops (Q.K^T products)  single-branch: {rep.score_flops_single}",
        f"score flop ratio dual/single: {rep.score_ratio:.4f}",
        f"projection flops               dual-branch: {rep.proj_flops_dual}",
        f"projection flops              single-branch: {rep.proj_flops_single}",
        f"gate flops (dual-branch only): {rep.gate_flops}",
        f"whole-block flops              dual-branch: {rep.block_flops_dual}",
        f"whole-block flops             single-branch: {rep.block_flops_single}",
        f"whole-block flop ratio dual/single: {rep.block_ratio:.4f}",
    ]
    return "\n".join(lines)
