"""CSV ingestion, chronological splitting, sliding windows, synthetic data.

Values are kept in their raw scale: the model's own instance normalization is
the only normalization applied, so there is deliberately *no* global
z-scoring here (pre-scaling would blur the distinction between the
normalized and raw paths that the model feeds on).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DataFormatError",
    "RawSeries",
    "SeriesInstance",
    "WindowDataset",
    "SplitRanges",
    "DataBundle",
    "load_csv",
    "save_csv",
    "chronological_split",
    "make_windows",
    "build_bundle",
    "SynthSpec",
    "synth_generate",
]

log = logging.getLogger("seesaw.data")


class DataFormatError(ValueError):
    """Input file violates the expected CSV layout."""


@dataclass
class RawSeries:
    """A full multivariate series, channels × time, NaN-free."""

    channel_names: list[str]
    values: np.ndarray  # C×Total
    timestamps: list[str] | None = None

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def total(self) -> int:
        return self.values.shape[1]


@dataclass
class SeriesInstance:
    """One training window: input x (C×L) and target y (C×H)."""

    x: np.ndarray
    y: np.ndarray


@dataclass
class WindowDataset:
    """Stride-1 sliding windows over one split of a RawSeries."""

    series: RawSeries
    starts: list[int]
    seq_len: int
    horizon: int
    tag: str  # train / val / test

    def __len__(self) -> int:
        return len(self.starts)

    def __getitem__(self, i: int) -> SeriesInstance:
        t = self.starts[i]
        v = self.series.values
        return SeriesInstance(
            x=v[:, t : t + self.seq_len], y=v[:, t + self.seq_len : t + self.seq_len + self.horizon]
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def load_csv(path) -> RawSeries:
    """Parse a header + float-columns CSV into a RawSeries.

    An optional first column named "date" is carried through as opaque
    timestamps.  Rows containing NaN are dropped with a logged diagnostic;
    any other unparsable cell is an error naming the data row (1-based) and
    column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file, expected a header row") from None
        has_date = bool(header) and header[0] == "date"
        names = header[1:] if has_date else header
        if not names:
            raise DataFormatError(f"{path}: no value columns in header")

        timestamps: list[str] = []
        rows: list[list[float]] = []
        nan_rows: list[int] = []
        for row_idx, raw in enumerate(reader, start=1):
            if len(raw) != len(header):
                raise DataFormatError(
                    f"{path}: row {row_idx} has {len(raw)} cells, header has {len(header)}"
                )
            cells = raw[1:] if has_date else raw
            parsed = []
            for col, cell in zip(names, cells):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {row_idx}, column {col!r}: cannot parse {cell!r}"
                    ) from None
            if any(math.isnan(v) for v in parsed):
                nan_rows.append(row_idx)
                continue
            rows.append(parsed)
            if has_date:
                timestamps.append(raw[0])

    if nan_rows:
        shown = ", ".join(str(r) for r in nan_rows[:5])
        log.warning("%s: dropped %d row(s) containing NaN (rows %s%s)",
                    path, len(nan_rows), shown, ", ..." if len(nan_rows) > 5 else "")
    if not rows:
        raise DataFormatError(f"{path}: no usable data rows")
    values = np.asarray(rows, dtype=np.float64).T  # column-major -> C×Total
    return RawSeries(
        channel_names=list(names),
        values=values,
        timestamps=timestamps if has_date else None,
    )


def save_csv(series: RawSeries, path) -> None:
    """Inverse of load_csv; writes repr-exact floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        has_date = series.timestamps is not None
        writer.writerow((["date"] if has_date else []) + series.channel_names)
        for t in range(series.total):
            row = [series.timestamps[t]] if has_date else []
            row += [repr(float(v)) for v in series.values[:, t]]
            writer.writerow(row)


@dataclass
class SplitRanges:
    """Contiguous [start, end) raw-index ranges for train/val/test.

    Val and test are extended backward by L−1 points so their first windows
    exist without borrowing future data: a window's *target* indices always
    stay inside (or after) its own split.
    """

    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]


def chronological_split(
    series: RawSeries, ratios: tuple[float, float, float], seq_len: int, horizon: int
) -> SplitRanges:
    """Prefix/middle/suffix split by ratios of the raw length.

    Zero-ratio splits come back empty (flagged in the log); any split with a
    positive ratio must still be long enough to hold at least one window.
    """
    tr, vr, te = ratios
    if tr <= 0 or vr < 0 or te < 0 or tr + vr + te > 1.0 + 1e-9:
        raise ValueError(f"invalid split ratios {ratios}: must be positive and sum <= 1")
    n = series.total
    need = seq_len + horizon
    if n < need:
        raise ValueError(f"series length {n} is shorter than one window ({need})")

    train_end = int(n * tr)
    val_end = train_end + int(n * vr)
    test_end = val_end + int(n * te)
    back = seq_len - 1

    train = (0, train_end)
    val = (max(train_end - back, 0), val_end) if vr > 0 else (train_end, train_end)
    test = (max(val_end - back, 0), test_end) if te > 0 else (val_end, val_end)

    for name, (start, end), ratio in (
        ("train", train, tr),
        ("val", val, vr),
        ("test", test, te),
    ):
        if ratio == 0:
            log.warning("split %r is empty (ratio 0)", name)
        elif end - start < need:
            raise ValueError(
                f"split {name!r} has {end - start} points, needs at least {need}"
            )
    return SplitRanges(train=train, val=val, test=test)


def make_windows(
    series: RawSeries, index_range: tuple[int, int], seq_len: int, horizon: int, tag: str = ""
) -> WindowDataset:
    """All stride-1 windows whose input+target fit inside ``index_range``."""
    start, end = index_range
    last = end - (seq_len + horizon)
    starts = list(range(start, last + 1)) if last >= start else []
    return WindowDataset(series=series, starts=starts, seq_len=seq_len, horizon=horizon, tag=tag)


@dataclass
class DataBundle:
    train: WindowDataset
    val: WindowDataset
    test: WindowDataset


def build_bundle(
    series: RawSeries, ratios: tuple[float, float, float], seq_len: int, horizon: int
) -> DataBundle:
    ranges = chronological_split(series, ratios, seq_len, horizon)
    return DataBundle(
        train=make_windows(series, ranges.train, seq_len, horizon, "train"),
        val=make_windows(series, ranges.val, seq_len, horizon, "val"),
        test=make_windows(series, ranges.test, seq_len, horizon, "test"),
    )


# ---------------------------------------------------------------------------
# synthetic generator


@dataclass
class SynthSpec:
    n_channels: int = 4
    total: int = 4000
    seed: int = 0
    regime_period: int = 96
    trend_scale: float = 1.0
    noise_std: float = 0.1


def synth_generate(spec: SynthSpec) -> RawSeries:
    """Regime-switching multichannel series for harness and demo runs.

    Construction, per channel c and time t with period T0 = regime_period:
      value = shared(t mod T0)                        (sinusoid mixture)
            + s_c(t)·coupling(t mod T0)               (cross-channel term)
            + trend_scale·slope_c·t/total             (per-channel trend)
            + noise_std·gaussian                      (observation noise)
    Even channels keep a fixed +1 coupling sign; odd channels flip their sign
    every regime (every T0 steps), so the correlation between channels 0 and
    1 alternates sign across consecutive regimes.  The periodic parts are
    built once per period and tiled, so a noise-free, trend-free single
    channel is bit-exactly periodic.
    """
    if spec.total < spec.regime_period:
        raise ValueError("total must be at least one regime_period")
    rng = np.random.default_rng(spec.seed)
    t0 = spec.regime_period
    phase = np.arange(t0) / t0

    shared = np.zeros(t0)
    for freq in (1, 2, 3):
        amp = rng.uniform(0.2, 0.5)
        shared += amp * np.sin(2.0 * np.pi * freq * phase + rng.uniform(0.0, 2.0 * np.pi))
    # coupling dominates the shared variance so regime flips show up in the
    # cross-channel correlation sign
    coupling = 2.0 * np.sin(2.0 * np.pi * 2 * phase + rng.uniform(0.0, 2.0 * np.pi))

    reps = -(-spec.total // t0)  # ceil
    shared_full = np.tile(shared, reps)[: spec.total]
    coupling_full = np.tile(coupling, reps)[: spec.total]
    regime = np.arange(spec.total) // t0
    flip = np.where(regime % 2 == 0, 1.0, -1.0)

    slopes = rng.normal(0.0, 1.0, size=spec.n_channels)
    t_frac = np.arange(spec.total) / spec.total
    values = np.empty((spec.n_channels, spec.total))
    for c in range(spec.n_channels):
        sign = np.ones(spec.total) if c % 2 == 0 else flip
        values[c] = (
            shared_full
            + sign * coupling_full
            + spec.trend_scale * slopes[c] * t_frac
        )
    if spec.noise_std > 0:
        values += rng.normal(0.0, spec.noise_std, size=values.shape)

    names = [f"ch{c}" for c in range(spec.n_channels)]
    return RawSeries(channel_names=names, values=values)
