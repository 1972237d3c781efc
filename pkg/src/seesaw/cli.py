"""Command-line entry point.

Subcommands: train, eval, forecast, export-attention, flops, synth.
Configuration precedence, lowest to highest: built-in defaults, then the
--config file (``key = value`` lines, ``#`` comments), then explicit flags.
Unknown config keys are rejected.  The effective configuration is echoed at
startup in config-file syntax so a run can be reproduced by pasting it back.

Verbosity comes from the SEESAW_LOG environment variable
(quiet | info | debug, default info).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .complexity import flop_report, format_flop_report
from .data import (
    DataFormatError,
    RawSeries,
    SynthSpec,
    build_bundle,
    load_csv,
    make_windows,
    save_csv,
    synth_generate,
)
from .model import (
    ABLATIONS,
    CheckpointError,
    ModelConfig,
    SeesawModel,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    LOSS_MODES,
    TrainConfig,
    TrainingError,
    evaluate,
    save_report,
    train,
)

__all__ = ["RunConfig", "main"]

log = logging.getLogger("seesaw.cli")


@dataclass
class RunConfig:
    """Flat key/value run configuration shared by every subcommand."""

    data: str = ""
    out: str = "out"
    seed: int = 0
    seq_len: int = 96
    pred_len: int = 24
    patch_len: int = 16
    stride: int = 8
    d_model: int = 64
    heads: int = 4
    d_ff: int = 0  # 0 -> 4 * d_model
    dropout: float = 0.1
    n_patch_layers: int = 2
    n_channel_layers: int = 1
    n_agg: int = 0  # 0 -> ceil(N/2)
    ablation: str = "full"
    loss: str = "fredf"
    alpha: float = 0.5
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    patience: int = 5
    clip_norm: float = 5.0
    train_ratio: float = 0.7
    val_ratio: float = 0.1
    test_ratio: float = 0.2
    channels: int = 4  # synth / flops only
    total: int = 4000  # synth only
    regime_period: int = 96
    trend_scale: float = 1.0
    noise_std: float = 0.1

    def validate(self) -> None:
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.loss not in LOSS_MODES:
            raise ValueError(f"loss must be one of {LOSS_MODES}, got {self.loss!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        for key in ("seq_len", "pred_len", "patch_len", "stride", "d_model", "heads",
                    "batch_size", "channels", "total", "regime_period"):
            if getattr(self, key) <= 0:
                raise ValueError(f"{key} must be positive")
        if self.epochs < 0 or self.patience < 0:
            raise ValueError("epochs and patience must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.train_ratio, self.val_ratio, self.test_ratio)

    def model_config(self, n_channels: int) -> ModelConfig:
        return ModelConfig(
            n_channels=n_channels,
            seq_len=self.seq_len,
            horizon=self.pred_len,
            patch_len=self.patch_len,
            stride=self.stride,
            d_model=self.d_model,
            heads=self.heads,
            d_ff=self.d_ff,
            dropout=self.dropout,
            n_patch_layers=self.n_patch_layers,
            n_channel_layers=self.n_channel_layers,
            n_agg=self.n_agg,
            ablation=self.ablation,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            loss_mode=self.loss,
            alpha=self.alpha,
            patience=self.patience,
            clip_norm=self.clip_norm,
            seed=self.seed,
        )


_FIELDS = {f.name: type(f.default) for f in dataclasses.fields(RunConfig)}


def parse_config_file(path) -> dict[str, str]:
    kv: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            kv[key.strip()] = value.strip()
    return kv


def apply_kv(cfg: RunConfig, kv: dict[str, str]) -> None:
    for key, value in kv.items():
        if key not in _FIELDS:
            raise ValueError(f"unknown config key {key!r}")
        setattr(cfg, key, _FIELDS[key](value))


def echo_config(cfg: RunConfig) -> None:
    print("# effective configuration (reparses as a config file)")
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        print(f"{f.name} = {value!r}" if isinstance(value, float) else f"{f.name} = {value}")
    print("# end configuration")


def _resolve(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        apply_kv(cfg, parse_config_file(args.config))
    if getattr(args, "ett_split", False):
        cfg.train_ratio, cfg.val_ratio, cfg.test_ratio = 0.6, 0.2, 0.2
    flag_kv = {
        name: getattr(args, name)
        for name in _FIELDS
        if hasattr(args, name)
    }
    for name, value in flag_kv.items():
        setattr(cfg, name, value)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# commands


def _load_series(cfg: RunConfig) -> RawSeries:
    if not cfg.data:
        raise ValueError("no data file given; pass --data PATH or set 'data' in the config")
    if not os.path.exists(cfg.data):
        raise FileNotFoundError(f"data file not found: {cfg.data}")
    return load_csv(cfg.data)


def _load_model(args) -> SeesawModel:
    path = getattr(args, "checkpoint", None)
    if not path:
        raise ValueError("no checkpoint given; pass --checkpoint PATH")
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _check_channels(model: SeesawModel, series: RawSeries) -> None:
    if series.n_channels != model.cfg.n_channels:
        raise ValueError(
            f"checkpoint expects {model.cfg.n_channels} channels, "
            f"data has {series.n_channels}"
        )


def cmd_train(cfg: RunConfig, args) -> int:
    series = _load_series(cfg)
    bundle = build_bundle(series, cfg.ratios, cfg.seq_len, cfg.pred_len)
    model = SeesawModel(cfg.model_config(series.n_channels))
    log.info("model has %d parameters", model.parameter_count())
    report = train(model, bundle, cfg.train_config())

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / "model.ckpt"
    report_path = out / "report.txt"
    save_checkpoint(model, ckpt_path)
    save_report(report, report_path)

    print(f"{'epoch':>5}  {'train_loss':>14}  {'val_loss':>14}")
    for i, (tl, vl) in enumerate(zip(report.train_losses, report.val_losses)):
        star = " *" if i == report.best_epoch else ""
        print(f"{i:>5}  {tl:>14.6f}  {vl:>14.6f}{star}")
    print(f"test_mse = {report.test_mse!r}")
    print(f"test_mae = {report.test_mae!r}")
    print(f"checkpoint: {ckpt_path}")
    print(f"report: {report_path}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    model = _load_model(args)
    series = _load_series(cfg)
    _check_channels(model, series)
    bundle = build_bundle(series, cfg.ratios, model.cfg.seq_len, model.cfg.horizon)
    mse, mae = evaluate(model, bundle.test)
    print(f"test_mse = {mse!r}")
    print(f"test_mae = {mae!r}")
    return 0


def cmd_forecast(cfg: RunConfig, args) -> int:
    model = _load_model(args)
    series = _load_series(cfg)
    _check_channels(model, series)
    seq_len = model.cfg.seq_len
    if series.total < seq_len:
        raise ValueError(
            f"forecast needs at least {seq_len} rows of input, got {series.total}"
        )
    x = series.values[:, -seq_len:]
    y_hat, _ = model.forward(x)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "forecast.csv"
    save_csv(RawSeries(channel_names=series.channel_names, values=y_hat.data), path)
    print(f"forecast: {path}")
    return 0


def _write_pgm(path, matrix: np.ndarray) -> None:
    lo, hi = float(matrix.min()), float(matrix.max())
    if hi > lo:
        pixels = np.rint((matrix - lo) / (hi - lo) * 255.0).astype(int)
    else:
        pixels = np.zeros(matrix.shape, dtype=int)
    rows, cols = matrix.shape
    lines = [
        "P2",
        f"# linear min-max scaling: 0 -> {lo!r}, 255 -> {hi!r}",
        f"{cols} {rows}",
        "255",
    ]
    lines += [" ".join(str(v) for v in row) for row in pixels]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_matrix_csv(path, matrix: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.atleast_2d(matrix):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _export_diags(out: Path, tag: str, diags_per_layer, picked: int) -> None:
    for layer_idx, sites in enumerate(diags_per_layer):
        diag = sites[picked]
        base = f"{tag}_layer{layer_idx}"
        for h in range(diag.a_sta.shape[0]):
            for kind, block in (("sta", diag.a_sta), ("non", diag.a_non)):
                _write_matrix_csv(out / f"{base}_head{h}_{kind}.csv", block[h])
                _write_pgm(out / f"{base}_head{h}_{kind}.pgm", block[h])
        # gate is exported as the weight assigned to the stationary branch
        _write_matrix_csv(out / f"{base}_gate.csv", 1.0 - diag.gate)


def cmd_export_attention(cfg: RunConfig, args) -> int:
    model = _load_model(args)
    series = _load_series(cfg)
    _check_channels(model, series)
    seq_len = model.cfg.seq_len
    if series.total < seq_len:
        raise ValueError(f"need at least {seq_len} rows, got {series.total}")
    index = args.index
    n_windows = series.total - seq_len + 1
    if not 0 <= index < n_windows:
        raise ValueError(f"instance index {index} out of range [0, {n_windows})")
    if not 0 <= args.channel < model.cfg.n_channels:
        raise ValueError(
            f"channel {args.channel} out of range [0, {model.cfg.n_channels})"
        )
    x = series.values[:, index : index + seq_len]
    _, diag = model.forward(x, want_diag=True)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _export_diags(out, "patch", diag.patch, picked=args.channel)
    # channel-relationship maps are exported for the first aggregated patch
    _export_diags(out, "channel", diag.channel, picked=0)
    n_files = len(list(out.glob("*.csv"))) + len(list(out.glob("*.pgm")))
    print(f"exported attention maps for instance {index} to {out} ({n_files} files)")
    return 0


def cmd_flops(cfg: RunConfig, args) -> int:
    channels = cfg.channels
    if cfg.data:
        channels = _load_series(cfg).n_channels
    mc = cfg.model_config(channels)
    print(format_flop_report(mc, flop_report(mc)))
    return 0


def cmd_synth(cfg: RunConfig, args) -> int:
    spec = SynthSpec(
        n_channels=cfg.channels,
        total=cfg.total,
        seed=cfg.seed,
        regime_period=cfg.regime_period,
        trend_scale=cfg.trend_scale,
        noise_std=cfg.noise_std,
    )
    series = synth_generate(spec)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "synth.csv"
    save_csv(series, path)
    print(f"synthetic data: {path}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "forecast": cmd_forecast,
    "export-attention": cmd_export_attention,
    "flops": cmd_flops,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="key = value config file")
    shared.add_argument("--ett-split", action="store_true",
                        help="use 0.6/0.2/0.2 split ratios")
    choices = {"ablation": ABLATIONS, "loss": LOSS_MODES}
    for name, ftype in _FIELDS.items():
        flag = "--" + name.replace("_", "-")
        shared.add_argument(flag, type=ftype, default=argparse.SUPPRESS,
                            choices=choices.get(name), metavar=name.upper())

    parser = argparse.ArgumentParser(prog="seesaw", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[shared], help="train a model, write checkpoint + report")
    for name in ("eval", "forecast"):
        p = sub.add_parser(name, parents=[shared])
        p.add_argument("--checkpoint", required=True)
    p = sub.add_parser("export-attention", parents=[shared])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", type=int, default=0, help="instance index (window start)")
    p.add_argument("--channel", type=int, default=0,
                   help="channel whose patch-attention maps are exported")
    sub.add_parser("flops", parents=[shared], help="analytic attention FLOP counts")
    sub.add_parser("synth", parents=[shared], help="generate synthetic CSV data")
    return parser


_LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def main(argv=None) -> int:
    level_name = os.environ.get("SEESAW_LOG", "info").lower()
    if level_name not in _LOG_LEVELS:
        print(f"error: SEESAW_LOG must be one of {sorted(_LOG_LEVELS)}", file=sys.stderr)
        return 2
    logging.basicConfig(level=_LOG_LEVELS[level_name], format="%(levelname)s %(name)s: %(message)s")

    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        if level_name != "quiet":
            echo_config(cfg)
        return _COMMANDS[args.command](cfg, args)
    except (ValueError, OSError, DataFormatError, CheckpointError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
