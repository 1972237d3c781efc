import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seesaw.data import (
    DataFormatError,
    RawSeries,
    SynthSpec,
    build_bundle,
    chronological_split,
    load_csv,
    make_windows,
    save_csv,
    synth_generate,
)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# CSV ingestion


def test_load_basic_two_channel_file(tmp_path):
    path = write(tmp_path, "a,b\n1,10\n2,20\n3,30\n4,40\n5,50\n")
    rs = load_csv(path)
    assert rs.channel_names == ["a", "b"]
    assert rs.values.shape == (2, 5)
    assert np.array_equal(rs.values[0], [1, 2, 3, 4, 5])
    assert rs.timestamps is None


def test_load_preserves_date_column(tmp_path):
    path = write(tmp_path, "date,a\n2020-01-01,1\n2020-01-02,2\n")
    rs = load_csv(path)
    assert rs.channel_names == ["a"]
    assert rs.timestamps == ["2020-01-01", "2020-01-02"]
    assert rs.values.shape == (1, 2)


def test_load_names_bad_cell_row(tmp_path):
    path = write(tmp_path, "a\n1\n2\nabc\n4\n")
    with pytest.raises(DataFormatError, match="row 3"):
        load_csv(path)


def test_load_rejects_ragged_rows(tmp_path):
    path = write(tmp_path, "a,b\n1,2\n3\n")
    with pytest.raises(DataFormatError, match="row 2"):
        load_csv(path)


def test_load_drops_nan_rows_with_diagnostic(tmp_path, caplog):
    path = write(tmp_path, "a,b\n1,2\nnan,3\n4,5\n")
    with caplog.at_level("WARNING", logger="seesaw.data"):
        rs = load_csv(path)
    assert rs.values.shape == (2, 2)
    assert any("NaN" in r.message for r in caplog.records)


def test_load_rejects_empty_file(tmp_path):
    with pytest.raises(DataFormatError):
        load_csv(write(tmp_path, ""))


def test_csv_roundtrip(tmp_path):
    rs = RawSeries(
        channel_names=["x", "y"],
        values=np.random.default_rng(0).normal(size=(2, 7)),
        timestamps=[f"t{i}" for i in range(7)],
    )
    path = tmp_path / "round.csv"
    save_csv(rs, path)
    back = load_csv(path)
    assert back.channel_names == rs.channel_names
    assert back.timestamps == rs.timestamps
    assert np.array_equal(back.values, rs.values)


# ---------------------------------------------------------------------------
# splits


def series_of(total):
    return RawSeries(channel_names=["a"], values=np.arange(float(total))[None, :])


def test_split_hand_case():
    ranges = chronological_split(series_of(100), (0.7, 0.1, 0.2), seq_len=10, horizon=2)
    assert ranges.train == (0, 70)
    assert ranges.val == (61, 80)
    assert ranges.test == (71, 100)


def test_split_all_train_flags_empty_parts(caplog):
    with caplog.at_level("WARNING", logger="seesaw.data"):
        ranges = chronological_split(series_of(50), (1.0, 0.0, 0.0), seq_len=5, horizon=2)
    assert ranges.train == (0, 50)
    assert ranges.val[0] == ranges.val[1]
    assert ranges.test[0] == ranges.test[1]
    assert sum("empty" in r.message for r in caplog.records) == 2


def test_split_too_short_series():
    with pytest.raises(ValueError):
        chronological_split(series_of(10), (0.7, 0.1, 0.2), seq_len=8, horizon=4)


def test_split_nonempty_part_too_short():
    # val ratio gives it 2 raw points + 9 carried over: still < L+H
    with pytest.raises(ValueError, match="val"):
        chronological_split(series_of(100), (0.7, 0.02, 0.2), seq_len=10, horizon=5)


def test_no_leakage_between_train_and_test():
    series = series_of(200)
    seq_len, horizon = 12, 3
    ranges = chronological_split(series, (0.7, 0.1, 0.2), seq_len, horizon)
    test_ds = make_windows(series, ranges.test, seq_len, horizon, "test")
    first_target_idx = min(s + seq_len for s in test_ds.starts)
    assert first_target_idx >= ranges.train[1]


# ---------------------------------------------------------------------------
# windows


def test_single_window_when_range_is_exact():
    ds = make_windows(series_of(20), (0, 12), seq_len=8, horizon=4)
    assert len(ds) == 1


def test_window_count_small_case():
    ds = make_windows(series_of(20), (0, 15), seq_len=8, horizon=4)
    assert len(ds) == 4


def test_window_indexing_contract():
    series = series_of(50)
    ds = make_windows(series, (10, 40), seq_len=8, horizon=4)
    inst = ds[0]
    assert inst.x.shape == (1, 8)
    assert inst.y.shape == (1, 4)
    assert inst.y[0][0] == series.values[0][10 + 8]


@settings(max_examples=80, deadline=None)
@given(data=st.data())
def test_window_count_formula(data):
    length = data.draw(st.integers(5, 120))
    seq_len = data.draw(st.integers(2, length))
    horizon = data.draw(st.integers(1, max(1, length - seq_len) if length > seq_len else 1))
    ds = make_windows(series_of(length), (0, length), seq_len, horizon)
    expected = max(length - (seq_len + horizon) + 1, 0)
    assert len(ds) == expected


def test_build_bundle_tags():
    bundle = build_bundle(series_of(200), (0.7, 0.1, 0.2), seq_len=12, horizon=3)
    assert (bundle.train.tag, bundle.val.tag, bundle.test.tag) == ("train", "val", "test")
    assert len(bundle.train) > 0 and len(bundle.val) > 0 and len(bundle.test) > 0


# ---------------------------------------------------------------------------
# synthetic generator


def test_synth_noise_free_single_channel_is_exactly_periodic():
    spec = SynthSpec(n_channels=1, total=300, seed=5, regime_period=50,
                     trend_scale=0.0, noise_std=0.0)
    rs = synth_generate(spec)
    v = rs.values[0]
    assert np.array_equal(v[:250], v[50:300])  # bit-exact tiling


def test_synth_same_seed_is_identical():
    spec = SynthSpec(n_channels=3, total=500, seed=9)
    a = synth_generate(spec)
    b = synth_generate(spec)
    assert np.array_equal(a.values, b.values)
    assert a.channel_names == b.channel_names


def test_synth_correlation_sign_flips_between_regimes():
    spec = SynthSpec(n_channels=2, total=960, seed=1, regime_period=96,
                     trend_scale=0.0, noise_std=0.05)
    rs = synth_generate(spec)
    signs = []
    for r in range(960 // 96):
        seg = rs.values[:, r * 96 : (r + 1) * 96]
        signs.append(np.sign(np.corrcoef(seg[0], seg[1])[0, 1]))
    for prev, nxt in zip(signs, signs[1:]):
        assert prev == -nxt


def test_synth_requires_one_full_regime():
    with pytest.raises(ValueError):
        synth_generate(SynthSpec(total=10, regime_period=50))
