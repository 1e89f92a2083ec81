"""CSV ingestion, chronological splitting, standardization, and sliding windows.

All arrays are float64 and row-ordered by time. Frames are immutable after
construction; every derived frame or window is safe to share across threads.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DegenerateSplit,
    EmptyFile,
    MissingColumn,
    NonNumericCell,
    ZeroVariance,
)


@dataclass(frozen=True)
class SeriesFrame:
    """A time-ordered (n_steps x C) block of observations.

    Timestamps are opaque row labels; nothing in the package parses them.
    """

    values: np.ndarray
    channel_names: tuple[str, ...]
    timestamps: tuple[str, ...] | None = None

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError("values must be a 2-D (n_steps x C) array")
        n, c = vals.shape
        if n < 1 or c < 1:
            raise ValueError("frame needs at least one row and one channel")
        if len(self.channel_names) != c:
            raise ValueError("channel_names length must equal the channel count")
        if len(set(self.channel_names)) != c:
            raise ValueError("channel names must be distinct")
        if not np.isfinite(vals).all():
            raise ValueError("frame values must all be finite")
        if self.timestamps is not None and len(self.timestamps) != n:
            raise ValueError("timestamps length must equal n_steps")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def slice_rows(self, start: int, stop: int) -> "SeriesFrame":
        """Return the sub-frame over rows [start, stop)."""
        ts = self.timestamps[start:stop] if self.timestamps is not None else None
        return SeriesFrame(self.values[start:stop].copy(), self.channel_names, ts)


@dataclass(frozen=True)
class ColumnSchema:
    """Column selection for load_csv.

    ``channels=None`` selects every non-timestamp column in file order.
    """

    timestamp_column: str | None = None
    channels: tuple[str, ...] | None = None


@dataclass(frozen=True)
class SplitSpec:
    """Chronological train/val/test split by ratio, e.g. (6, 2, 2)."""

    train_frac: float | int
    val_frac: float | int
    test_frac: float | int
    lookback_overlap: bool = True

    def __post_init__(self):
        if min(self.train_frac, self.val_frac, self.test_frac) <= 0:
            raise ValueError("split fractions must all be positive")

    def boundaries(self, n_steps: int) -> tuple[int, int]:
        """Floor the cumulative fractions of n_steps into two cut points."""
        w = (
            Fraction(self.train_frac).limit_denominator(10**9),
            Fraction(self.val_frac).limit_denominator(10**9),
            Fraction(self.test_frac).limit_denominator(10**9),
        )
        total = sum(w)
        b1 = math.floor(n_steps * w[0] / total)
        b2 = math.floor(n_steps * (w[0] + w[1]) / total)
        return b1, b2


@dataclass(frozen=True)
class SplitFrames:
    """Result of a chronological split.

    ``val_context`` / ``test_context`` count leading rows of the val/test
    frames that were borrowed from the preceding segment so every target
    position has a full lookback window. Borrowed rows must never be used
    as targets; window enumeration handles this via ``first_target_origin``.
    """

    train: SeriesFrame
    val: SeriesFrame
    test: SeriesFrame
    val_context: int = 0
    test_context: int = 0


@dataclass(frozen=True)
class StandardizeStats:
    """Per-channel mean and population standard deviation of the fit segment."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=np.float64))


@dataclass(frozen=True)
class WindowSample:
    """One supervised pair: x is (T x C), y is the (L x C) continuation."""

    x: np.ndarray
    y: np.ndarray
    origin_index: int


def load_csv(path, schema: ColumnSchema | None = None) -> SeriesFrame:
    """Parse a UTF-8, comma-separated, header-first CSV into a SeriesFrame.

    Rows keep file order. No imputation: any cell that does not parse as a
    finite float raises NonNumericCell with its data-row index and column.
    """
    schema = schema or ColumnSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path}: no header row") from None
        rows = list(reader)
    if not rows:
        raise EmptyFile(f"{path}: no data rows")

    col_index = {name: i for i, name in enumerate(header)}
    ts_col = schema.timestamp_column
    if ts_col is not None and ts_col not in col_index:
        raise MissingColumn(ts_col)
    if schema.channels is not None:
        channels = tuple(schema.channels)
        for name in channels:
            if name not in col_index:
                raise MissingColumn(name)
    else:
        channels = tuple(name for name in header if name != ts_col)
    if not channels:
        raise MissingColumn("<no numeric columns selected>")

    idx = [col_index[name] for name in channels]
    values = np.empty((len(rows), len(channels)), dtype=np.float64)
    for r, row in enumerate(rows):
        for k, (name, j) in enumerate(zip(channels, idx)):
            if j >= len(row):
                raise NonNumericCell(r, name, "<missing>")
            cell = row[j]
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericCell(r, name, cell) from None
            if not math.isfinite(v):
                raise NonNumericCell(r, name, cell)
            values[r, k] = v

    timestamps = None
    if ts_col is not None:
        j = col_index[ts_col]
        timestamps = tuple(row[j] if j < len(row) else "" for row in rows)
    return SeriesFrame(values, channels, timestamps)


def chronological_split(
    frame: SeriesFrame, spec: SplitSpec, max_lookback: int = 0
) -> SplitFrames:
    """Cut a frame into contiguous train/val/test segments.

    With ``spec.lookback_overlap`` the val and test frames are materialized
    with up to ``max_lookback`` extra leading rows borrowed from the segment
    before them, so every nominal target position has a full input window.
    """
    n = frame.n_steps
    b1, b2 = spec.boundaries(n)
    if not (0 < b1 < b2 < n):
        raise DegenerateSplit(
            f"split of {n} rows at ({b1}, {b2}) leaves an empty segment"
        )
    val_ctx = test_ctx = 0
    if spec.lookback_overlap and max_lookback > 0:
        val_ctx = min(max_lookback, b1)
        test_ctx = min(max_lookback, b2)
    return SplitFrames(
        train=frame.slice_rows(0, b1),
        val=frame.slice_rows(b1 - val_ctx, b2),
        test=frame.slice_rows(b2 - test_ctx, n),
        val_context=val_ctx,
        test_context=test_ctx,
    )


def fit_standardize(train: SeriesFrame) -> StandardizeStats:
    """Per-channel mean and population std of the train segment.

    Channels with zero variance are rejected: they cannot be z-scored.
    """
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)  # population (divide-by-n) convention
    for c, s in enumerate(std):
        if s <= 0.0:
            raise ZeroVariance(train.channel_names[c])
    return StandardizeStats(mean, std)


def apply_standardize(frame: SeriesFrame, stats: StandardizeStats) -> SeriesFrame:
    return SeriesFrame(
        (frame.values - stats.mean) / stats.std, frame.channel_names, frame.timestamps
    )


def invert_standardize(frame: SeriesFrame, stats: StandardizeStats) -> SeriesFrame:
    return SeriesFrame(
        frame.values * stats.std + stats.mean, frame.channel_names, frame.timestamps
    )


def window_count(n_steps: int, T: int, L: int) -> int:
    """Number of (T, L) sliding windows in a series of n_steps rows."""
    if T < 1 or L < 1:
        raise ValueError("T and L must be >= 1")
    return max(0, n_steps - (T + L) + 1)


def first_target_origin(context_rows: int, T: int) -> int:
    """First window origin whose target lies past the borrowed context rows."""
    return max(0, context_rows - T)


def window_origins(
    n_steps: int, T: int, L: int, stride: int = 1, context_rows: int = 0
) -> np.ndarray:
    """Origins of every enumerable window, honoring stride and borrowed context."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    last = n_steps - (T + L)
    start = first_target_origin(context_rows, T)
    if last < start:
        return np.empty(0, dtype=np.int64)
    return np.arange(start, last + 1, stride, dtype=np.int64)


def iter_windows(
    frame: SeriesFrame, T: int, L: int, stride: int = 1
) -> Iterator[WindowSample]:
    """Yield every full (T, L) window at origins 0, stride, 2*stride, ...

    At stride 1 the yield count equals ``window_count``. Views into the
    frame are returned; the backing array is read-only.
    """
    vals = frame.values
    for o in window_origins(frame.n_steps, T, L, stride):
        o = int(o)
        yield WindowSample(x=vals[o : o + T], y=vals[o + T : o + T + L], origin_index=o)


def gather_windows(
    values: np.ndarray, origins: Sequence[int], T: int, L: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows at the given origins into (N,T,C) inputs and (N,L,C) targets."""
    xs = np.stack([values[o : o + T] for o in origins])
    ys = np.stack([values[o + T : o + T + L] for o in origins])
    return xs, ys
