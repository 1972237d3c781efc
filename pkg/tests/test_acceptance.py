"""Acceptance suite: one test per criterion, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
happen; without ``-s`` pytest still reports each criterion by test name.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from seesaw.asna import asna_forward, init_asna_params
from seesaw.cli import main as cli_main
from seesaw.data import RawSeries, SynthSpec, build_bundle, save_csv, synth_generate
from seesaw.model import ABLATIONS, ModelConfig, SeesawModel, save_checkpoint
from seesaw.norm import in_denorm, in_norm
from seesaw.tensor import Tape, Tensor
from seesaw.training import TrainConfig, evaluate, fredf_loss, mae_loss, train

from oracles import asna_param_arrays, finite_difference_grad, max_rel_err, naive_asna_forward


@contextmanager
def criterion(num: int, desc: str):
    try:
        yield
    except BaseException:
        print(f"[criterion {num:02d}] FAIL  {desc}")
        raise
    print(f"[criterion {num:02d}] PASS  {desc}")


def grad_suite_cfg(**kw):
    base = dict(
        n_channels=2, seq_len=16, horizon=4, patch_len=4, stride=4, d_model=8,
        heads=2, dropout=0.0, n_patch_layers=1, n_channel_layers=1, n_agg=2, seed=1,
    )
    base.update(kw)
    return ModelConfig(**base)


def fredf_gradcheck(model: SeesawModel, x: np.ndarray, y: np.ndarray, tol: float) -> float:
    named = model.named_parameters()

    def loss_value():
        y_hat, _ = model.forward(x)
        return fredf_loss(y_hat, y, 0.5).item()

    for _, t in named:
        t.grad = None
    with Tape() as tape:
        y_hat, _ = model.forward(x)
        loss = fredf_loss(y_hat, y, 0.5)
    tape.backward(loss)
    numeric = finite_difference_grad(loss_value, [t for _, t in named])
    worst = 0.0
    for (name, t), num in zip(named, numeric):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        err = max_rel_err(analytic, num)
        assert err < tol, f"{name}: rel err {err:.3e}"
        worst = max(worst, err)
    return worst


def run_cli(capsys, *argv):
    code = cli_main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_criterion_01_end_to_end_gradient_suite():
    with criterion(1, "end-to-end fredf gradient matches finite differences < 1e-4"):
        started = time.perf_counter()
        model = SeesawModel(grad_suite_cfg())
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 16)) * 2.0 + 1.0
        y = rng.normal(size=(2, 4))
        worst = fredf_gradcheck(model, x, y, tol=1e-4)
        elapsed = time.perf_counter() - started
        assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"
        print(f"  worst rel err {worst:.2e} over {model.parameter_count()} params "
              f"in {elapsed:.1f}s", end="  ")


def test_criterion_02_asna_oracle_equivalence():
    with criterion(2, "asna_forward matches the naive-loop oracle within 1e-10"):
        cases = 0
        for seed in range(24):
            rng = np.random.default_rng(1000 + seed)
            heads = int(rng.integers(1, 3))
            d = int(rng.choice([2, 4, 6]))
            if d % heads:
                d = heads * max(1, d // heads)
            t_len = int(rng.integers(1, 5))
            params = init_asna_params(rng, d, heads, 2 * d, 0.0)
            z_sta = Tensor(rng.normal(size=(t_len, d)))
            z_non = Tensor(rng.normal(size=(t_len, d)))
            out = asna_forward(z_sta, z_non, params)
            ref_sta, ref_non = naive_asna_forward(
                z_sta.data, z_non.data, asna_param_arrays(params), heads
            )
            assert np.max(np.abs(out.z_sta.data - ref_sta)) < 1e-10
            assert np.max(np.abs(out.z_non.data - ref_non)) < 1e-10
            cases += 1
        assert cases >= 20


def test_criterion_03_row_stochasticity_battery():
    with criterion(3, "A_sta, A_non and the fused matrix are row-stochastic ± 1e-6"):
        for seed in range(20):
            rng = np.random.default_rng(2000 + seed)
            heads = int(rng.integers(1, 4))
            d = heads * int(rng.integers(1, 4))
            t_len = int(rng.integers(1, 7))
            params = init_asna_params(rng, d, heads, 2 * d, 0.0)
            z_sta = Tensor(3.0 * rng.normal(size=(t_len, d)))
            z_non = Tensor(3.0 * rng.normal(size=(t_len, d)))
            out = asna_forward(z_sta, z_non, params, want_diag=True)
            diag = out.diag
            assert np.allclose(diag.a_sta.sum(axis=-1), 1.0, atol=1e-6)
            assert np.allclose(diag.a_non.sum(axis=-1), 1.0, atol=1e-6)
            gate_cols = diag.gate.T[:, :, None]  # heads×T×1, broadcast over keys
            fused = (1.0 - gate_cols) * diag.a_sta + gate_cols * diag.a_non
            assert np.allclose(fused.sum(axis=-1), 1.0, atol=1e-6)


def test_criterion_04_roundtrip_and_affine_covariance():
    with criterion(4, "IN roundtrip exact within 1e-9; forecast affine-equivariant within 1e-6"):
        rng = np.random.default_rng(3)
        for _ in range(25):
            x = rng.normal(rng.normal(), rng.uniform(0.1, 30.0), size=(3, 20))
            x[0] = x[0, 0]  # constant channel included
            x_sta, stats = in_norm(Tensor(x))
            assert np.allclose(in_denorm(x_sta, stats).data, x, atol=1e-9)

        # equivariance is asserted on the stationary-only configuration: the
        # raw-path branch reacts to raw scale by design, so the full dual-path
        # mode deviates (measured and reported below, not asserted)
        x = rng.normal(size=(2, 16)) + 2.0
        a = np.array([[3.0], [0.25]])
        b = np.array([[-5.0], [40.0]])
        sta_only = SeesawModel(grad_suite_cfg(ablation="no_non", seed=4))
        base, _ = sta_only.forward(x)
        moved, _ = sta_only.forward(a * x + b)
        assert np.allclose(moved.data, a * base.data + b, atol=1e-6)

        full = SeesawModel(grad_suite_cfg(seed=4))
        fb, _ = full.forward(x)
        fm, _ = full.forward(a * x + b)
        deviation = float(np.max(np.abs(fm.data - (a * fb.data + b))))
        print(f"  full-mode raw-path deviation {deviation:.3g} (reported, by design)",
              end="  ")


def test_criterion_05_ablation_wiring():
    with criterion(5, "all 7 ablations construct, train 1 epoch, pass the gradient check"):
        series = synth_generate(
            SynthSpec(n_channels=2, total=120, seed=5, regime_period=24,
                      trend_scale=0.3, noise_std=0.05)
        )
        bundle = build_bundle(series, (0.7, 0.1, 0.2), seq_len=8, horizon=2)
        rng = np.random.default_rng(6)
        for ablation in ABLATIONS:
            cfg = ModelConfig(
                n_channels=2, seq_len=8, horizon=2, patch_len=4, stride=4,
                d_model=4, heads=2, d_ff=8, dropout=0.0, n_patch_layers=1,
                n_channel_layers=1, n_agg=2, ablation=ablation, seed=6,
            )
            model = SeesawModel(cfg)
            report = train(model, bundle, TrainConfig(epochs=1, batch_size=16, seed=6))
            assert report.epochs_run == 1, ablation
            x = rng.normal(size=(2, 8))
            y = rng.normal(size=(2, 2))
            fredf_gradcheck(model, x, y, tol=1e-4)

        # no_non must equal full mode with the gate forced to zero, bit-for-bit
        x = np.random.default_rng(7).normal(size=(2, 8))
        full = SeesawModel(ModelConfig(n_channels=2, seq_len=8, horizon=2, patch_len=4,
                                       stride=4, d_model=4, heads=2, d_ff=8, dropout=0.0,
                                       n_patch_layers=1, n_channel_layers=1, n_agg=2,
                                       ablation="full", seed=8))
        ablated = SeesawModel(ModelConfig(n_channels=2, seq_len=8, horizon=2, patch_len=4,
                                          stride=4, d_model=4, heads=2, d_ff=8, dropout=0.0,
                                          n_patch_layers=1, n_channel_layers=1, n_agg=2,
                                          ablation="no_non", seed=8))
        forced, _ = full.forward(x, gate_override=0.0)
        wired, _ = ablated.forward(x)
        assert np.array_equal(forced.data, wired.data)


def test_criterion_06_synthetic_forecasting_skill():
    with criterion(6, "default training beats repeat-last baseline by > 30% in < 5 min"):
        started = time.perf_counter()
        series = synth_generate(SynthSpec(n_channels=4, total=4000, seed=7))
        bundle = build_bundle(series, (0.7, 0.1, 0.2), seq_len=96, horizon=24)

        baseline = float(np.mean([
            np.mean((inst.y - inst.x[:, -1:]) ** 2) for inst in bundle.test
        ]))

        model = SeesawModel(ModelConfig(n_channels=4, seq_len=96, horizon=24, seed=7))
        epochs = 3  # well under the 20-epoch budget
        report = train(model, bundle, TrainConfig(epochs=epochs, seed=7))
        elapsed = time.perf_counter() - started

        assert epochs <= 20
        assert report.test_mse <= 0.7 * baseline, (
            f"test MSE {report.test_mse:.4f} vs baseline {baseline:.4f}"
        )
        assert elapsed < 300.0, f"took {elapsed:.0f}s"
        print(f"  test MSE {report.test_mse:.4f} vs baseline {baseline:.4f} "
              f"({report.test_mse / baseline:.1%}) in {elapsed:.0f}s", end="  ")


TINY_CLI_FLAGS = [
    "--seq-len", "16", "--pred-len", "4", "--patch-len", "4", "--stride", "4",
    "--d-model", "8", "--heads", "2", "--n-patch-layers", "1",
    "--n-channel-layers", "1", "--epochs", "1", "--batch-size", "16",
    "--channels", "2", "--total", "200", "--regime-period", "24",
]


def test_criterion_07_loss_ablation_harness(capsys, tmp_path):
    with criterion(7, "mse and fredf losses both complete; fredf(alpha=0) is exactly MAE"):
        data_dir = tmp_path / "synth"
        code, _, err = run_cli(capsys, "synth", "--out", str(data_dir), *TINY_CLI_FLAGS)
        assert code == 0, err
        data = data_dir / "synth.csv"
        for loss_mode in ("mse", "fredf"):
            out = tmp_path / f"run_{loss_mode}"
            code, _, err = run_cli(
                capsys, "train", "--data", str(data), "--out", str(out),
                "--loss", loss_mode, *TINY_CLI_FLAGS,
            )
            assert code == 0, (loss_mode, err)
            assert (out / "model.ckpt").exists()

        rng = np.random.default_rng(9)
        for _ in range(20):
            y_hat = Tensor(rng.normal(size=(3, 8)))
            y = rng.normal(size=(3, 8))
            gap = abs(fredf_loss(y_hat, y, alpha=0.0).item() - mae_loss(y_hat, y).item())
            assert gap <= 1e-12


def test_criterion_08_complexity_claim(capsys):
    with criterion(8, "score-FLOP ratio dual/single lies in [1.9, 2.3] at default config"):
        code, out, err = run_cli(capsys, "flops")
        assert code == 0, err
        ratio = float(out.split("score flop ratio dual/single: ")[1].splitlines()[0])
        assert 1.9 <= ratio <= 2.3
        print(f"  ratio {ratio:.4f}", end="  ")


def test_criterion_09_determinism(capsys, tmp_path):
    with criterion(9, "identical seeds give bit-identical reports and checkpoints"):
        data_dir = tmp_path / "synth"
        assert run_cli(capsys, "synth", "--out", str(data_dir), *TINY_CLI_FLAGS)[0] == 0
        data = data_dir / "synth.csv"
        outs = []
        for name in ("run_a", "run_b"):
            out = tmp_path / name
            code, _, err = run_cli(
                capsys, "train", "--data", str(data), "--out", str(out),
                "--seed", "13", *TINY_CLI_FLAGS,
            )
            assert code == 0, err
            outs.append(out)
        a, b = outs
        assert (a / "report.txt").read_text() == (b / "report.txt").read_text()
        assert (a / "model.ckpt").read_bytes() == (b / "model.ckpt").read_bytes()

        evals = []
        for out in outs:
            code, stdout, err = run_cli(
                capsys, "eval", "--checkpoint", str(out / "model.ckpt"),
                "--data", str(data), *TINY_CLI_FLAGS,
            )
            assert code == 0, err
            evals.append(stdout)
        assert evals[0] == evals[1]


def parse_matrix(path):
    return np.asarray([
        [float(v) for v in line.split(",")]
        for line in path.read_text().strip().splitlines()
    ])


def test_criterion_10_attention_scale_sensitivity(capsys, tmp_path):
    with criterion(10, "same-after-IN pair: stationary maps closer than non-stationary maps"):
        rng = np.random.default_rng(11)
        seq_len = 32
        base = np.cumsum(rng.normal(size=(2, seq_len)), axis=1) + np.sin(
            np.arange(seq_len) / 3.0
        )
        scale = np.array([[4.0], [0.2]])
        shift = np.array([[30.0], [-10.0]])
        pair = {"base": base, "moved": scale * base + shift}

        cfg = ModelConfig(n_channels=2, seq_len=seq_len, horizon=4, patch_len=8,
                          stride=4, d_model=8, heads=2, dropout=0.0,
                          n_patch_layers=1, n_channel_layers=1, seed=12)
        ckpt = tmp_path / "model.ckpt"
        save_checkpoint(SeesawModel(cfg), ckpt)

        exports = {}
        for name, values in pair.items():
            csv_path = tmp_path / f"{name}.csv"
            save_csv(RawSeries(["c0", "c1"], values), csv_path)
            out = tmp_path / f"maps_{name}"
            code, _, err = run_cli(
                capsys, "export-attention", "--checkpoint", str(ckpt),
                "--data", str(csv_path), "--out", str(out), "--index", "0",
            )
            assert code == 0, err
            exports[name] = out

        sta_diff = non_diff = 0.0
        for head in range(cfg.heads):
            for kind in ("sta", "non"):
                fname = f"patch_layer0_head{head}_{kind}.csv"
                delta = parse_matrix(exports["base"] / fname) - parse_matrix(
                    exports["moved"] / fname
                )
                frob = float(np.linalg.norm(delta))
                if kind == "sta":
                    sta_diff += frob
                else:
                    non_diff += frob
        assert sta_diff < non_diff, (sta_diff, non_diff)
        print(f"  ||dA_sta||_F {sta_diff:.2e} < ||dA_non||_F {non_diff:.2e}", end="  ")
