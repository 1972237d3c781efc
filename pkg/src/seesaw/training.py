"""Losses, metrics, Adam, and the mini-batch training loop.

The training objective is either plain MSE or a hybrid time/frequency MAE:
a convex mix of the mean absolute forecast error and the mean modulus of the
DFT of the error taken over the horizon axis.  The frequency term is
normalized by the number of DFT bins (⌊H/2⌋+1) per channel, so for a constant
error c the pure-frequency loss equals |c|·H / n_bins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import WindowDataset
from .model import SeesawModel
from .tensor import (
    ShapeError,
    Tape,
    Tensor,
    abs_,
    index_select,
    mean_all,
    rdft,
    sqrt,
    zero_grads,
)

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainingError",
    "fredf_loss",
    "mse_loss",
    "mae_loss",
    "metrics",
    "adam_step",
    "clip_gradients",
    "TrainReport",
    "train",
    "evaluate",
    "save_report",
    "load_report",
]

LOSS_MODES = ("fredf", "mse")


class TrainingError(RuntimeError):
    """Raised when training hits an unrecoverable numeric problem."""


@dataclass
class TrainConfig:
    lr: float = 1e-3  # paper-style grid also includes 2e-4 and 1e-4
    epochs: int = 10
    batch_size: int = 32
    loss_mode: str = "fredf"
    alpha: float = 0.5  # frequency-term weight of the hybrid loss
    patience: int = 5  # early stopping on validation loss
    clip_norm: float = 5.0  # global-norm gradient clip; guards the raw path
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}")


def _check_same_shape(y_hat: Tensor, y: Tensor) -> None:
    if y_hat.shape != y.shape:
        raise ShapeError(f"loss: shapes differ, {y_hat.shape} vs {y.shape}")


def fredf_loss(y_hat: Tensor, y, alpha: float) -> Tensor:
    """alpha · mean|DFT(err)| + (1−alpha) · mean|err| over a C×H error grid.

    The DFT runs over the horizon axis per channel; moduli are averaged over
    all C·(⌊H/2⌋+1) bins.  At alpha=0 this is exactly the time-domain MAE.
    """
    y = y if isinstance(y, Tensor) else Tensor(y)
    _check_same_shape(y_hat, y)
    diff = y_hat - y
    time_term = mean_all(abs_(diff))
    if alpha == 0.0:
        return time_term
    spectrum = rdft(diff)  # DFT is linear: DFT(y_hat) − DFT(y) = DFT(diff)
    re = index_select(spectrum, 0, axis=-1)
    im = index_select(spectrum, 1, axis=-1)
    freq_term = mean_all(sqrt(re * re + im * im))
    if alpha == 1.0:
        return freq_term
    return alpha * freq_term + (1.0 - alpha) * time_term


def mse_loss(y_hat: Tensor, y) -> Tensor:
    y = y if isinstance(y, Tensor) else Tensor(y)
    _check_same_shape(y_hat, y)
    diff = y_hat - y
    return mean_all(diff * diff)


def mae_loss(y_hat: Tensor, y) -> Tensor:
    y = y if isinstance(y, Tensor) else Tensor(y)
    _check_same_shape(y_hat, y)
    return mean_all(abs_(y_hat - y))


def metrics(y_hat: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(MSE, MAE) over all C×H entries; plain numpy, no tape."""
    if y_hat.shape != y.shape:
        raise ShapeError(f"metrics: shapes differ, {y_hat.shape} vs {y.shape}")
    diff = y_hat - y
    return float(np.mean(diff * diff)), float(np.mean(np.abs(diff)))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """First/second moment estimates per parameter, plus the step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, named_params) -> "AdamState":
        m = {name: np.zeros_like(t.data) for name, t in named_params}
        v = {name: np.zeros_like(t.data) for name, t in named_params}
        return cls(m=m, v=v)


def adam_step(named_params, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update, in place.  Missing gradients count as zero."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, p in named_params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        p.data = p.data - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def clip_gradients(named_params, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = 0.0
    for _, p in named_params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for _, p in named_params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainReport:
    seed: int
    loss_mode: str
    alpha: float
    lr: float
    epochs_requested: int
    epochs_run: int
    best_epoch: int  # -1 when no epoch ran
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    test_mse: float = 0.0
    test_mae: float = 0.0
    n_train: int = 0
    n_val: int = 0
    n_test: int = 0


def _loss_fn(cfg: TrainConfig):
    if cfg.loss_mode == "mse":
        return lambda y_hat, y: mse_loss(y_hat, y)
    return lambda y_hat, y: fredf_loss(y_hat, y, cfg.alpha)


def evaluate(model: SeesawModel, dataset: WindowDataset) -> tuple[float, float]:
    """Mean (MSE, MAE) over a window dataset, dropout off."""
    if len(dataset) == 0:
        raise ValueError("evaluate: dataset is empty")
    mse_sum = mae_sum = 0.0
    for inst in dataset:
        y_hat, _ = model.forward(inst.x)
        mse, mae = metrics(y_hat.data, inst.y)
        mse_sum += mse
        mae_sum += mae
    return mse_sum / len(dataset), mae_sum / len(dataset)


def _mean_loss(model: SeesawModel, dataset: WindowDataset, loss) -> float:
    total = 0.0
    for inst in dataset:
        y_hat, _ = model.forward(inst.x)
        total += loss(y_hat, inst.y).item()
    return total / len(dataset)


def train(model: SeesawModel, bundle, cfg: TrainConfig) -> TrainReport:
    """Mini-batch loop with early stopping on validation loss.

    ``bundle`` carries train/val/test WindowDatasets.  The best-validation
    parameters are restored before the test metrics are computed.  Everything
    is driven by one seeded RNG (shuffling, then dropout in encounter order),
    so identical seeds give bit-identical reports.
    """
    if len(bundle.train) == 0 or len(bundle.test) == 0:
        raise ValueError("train: empty train or test split")
    if cfg.epochs > 0 and len(bundle.val) == 0:
        raise ValueError("train: empty validation split with epochs > 0")

    rng = np.random.default_rng(cfg.seed)
    loss = _loss_fn(cfg)
    named = model.named_parameters()
    state = AdamState.for_params(named)
    report = TrainReport(
        seed=cfg.seed,
        loss_mode=cfg.loss_mode,
        alpha=cfg.alpha,
        lr=cfg.lr,
        epochs_requested=cfg.epochs,
        epochs_run=0,
        best_epoch=-1,
        n_train=len(bundle.train),
        n_val=len(bundle.val),
        n_test=len(bundle.test),
    )

    best_val = np.inf
    best_params: dict[str, np.ndarray] | None = None
    stale = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(bundle.train))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            zero_grads(t for _, t in named)
            inv = 1.0 / len(batch)
            for i in batch:
                inst = bundle.train[int(i)]
                with Tape() as tape:
                    y_hat, _ = model.forward(inst.x, train_mode=True, rng=rng)
                    sample_loss = loss(y_hat, inst.y) * inv
                tape.backward(sample_loss)
                epoch_loss += sample_loss.item() * len(batch)
            clip_gradients(named, cfg.clip_norm)
            adam_step(named, state, cfg.lr)
        report.train_losses.append(epoch_loss / len(order))

        val_loss = _mean_loss(model, bundle.val, loss)
        report.val_losses.append(val_loss)
        report.epochs_run = epoch + 1
        if val_loss < best_val:
            best_val = val_loss
            best_params = {name: t.data.copy() for name, t in named}
            report.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    if best_params is not None:
        for name, t in named:
            t.data = best_params[name]
    report.test_mse, report.test_mae = evaluate(model, bundle.test)
    return report


# ---------------------------------------------------------------------------
# report file: line-oriented "key = value" schema, floats written with repr()
# so the file round-trips exactly.  Keys:
#   format, seed, loss_mode, alpha, lr, epochs_requested, epochs_run,
#   best_epoch, n_train, n_val, n_test, epoch.<i>.train_loss,
#   epoch.<i>.val_loss, test_mse, test_mae

REPORT_FORMAT = "seesaw-train-report-v1"


def save_report(report: TrainReport, path) -> None:
    lines = [
        f"format = {REPORT_FORMAT}",
        f"seed = {report.seed}",
        f"loss_mode = {report.loss_mode}",
        f"alpha = {report.alpha!r}",
        f"lr = {report.lr!r}",
        f"epochs_requested = {report.epochs_requested}",
        f"epochs_run = {report.epochs_run}",
        f"best_epoch = {report.best_epoch}",
        f"n_train = {report.n_train}",
        f"n_val = {report.n_val}",
        f"n_test = {report.n_test}",
    ]
    for i, (tl, vl) in enumerate(zip(report.train_losses, report.val_losses)):
        lines.append(f"epoch.{i}.train_loss = {tl!r}")
        lines.append(f"epoch.{i}.val_loss = {vl!r}")
    lines.append(f"test_mse = {report.test_mse!r}")
    lines.append(f"test_mae = {report.test_mae!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_report(path) -> TrainReport:
    kv: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition(" = ")
            kv[key] = value
    if kv.get("format") != REPORT_FORMAT:
        raise ValueError(f"{path}: not a {REPORT_FORMAT} file")
    report = TrainReport(
        seed=int(kv["seed"]),
        loss_mode=kv["loss_mode"],
        alpha=float(kv["alpha"]),
        lr=float(kv["lr"]),
        epochs_requested=int(kv["epochs_requested"]),
        epochs_run=int(kv["epochs_run"]),
        best_epoch=int(kv["best_epoch"]),
        n_train=int(kv["n_train"]),
        n_val=int(kv["n_val"]),
        n_test=int(kv["n_test"]),
        test_mse=float(kv["test_mse"]),
        test_mae=float(kv["test_mae"]),
    )
    for i in range(report.epochs_run):
        report.train_losses.append(float(kv[f"epoch.{i}.train_loss"]))
        report.val_losses.append(float(kv[f"epoch.{i}.val_loss"]))
    return report
