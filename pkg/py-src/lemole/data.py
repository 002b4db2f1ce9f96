"""Dataset ingestion, chronological splitting, normalization and windowing."""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    EmptyFile,
    FrameTooShort,
    MissingColumn,
    NonDescendingWindows,
    NonNumericCell,
    NonUniformSampling,
    SplitTooSmall,
    WindowExceedsLookback,
    ZeroVariance,
)

if TYPE_CHECKING:
    from .prompts import DatasetMeta

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class SeriesFrame:
    """Multivariate, uniformly sampled series.

    Attributes:
        timestamps: Epoch seconds, one per row, strictly increasing
        values: rows x channels matrix
        channel_names: One name per column of ``values``
        freq_seconds: Sampling period in seconds
    """

    timestamps: np.ndarray
    values: np.ndarray
    channel_names: Tuple[str, ...]
    freq_seconds: int

    def __post_init__(self):
        timestamps = _frozen(np.asarray(self.timestamps, dtype=np.int64))
        values = _frozen(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))

        if self.freq_seconds <= 0:
            raise ValueError(f"freq_seconds must be positive, got {self.freq_seconds}")
        if values.ndim != 2 or values.shape[0] != timestamps.shape[0]:
            raise ValueError(
                f"values shape {values.shape} does not match {timestamps.shape[0]} timestamps"
            )
        if values.shape[1] != len(self.channel_names):
            raise ValueError("channel_names must name every column")
        if not np.all(np.isfinite(values)):
            raise NonNumericCell("values contain NaN or Inf")
        if timestamps.shape[0] > 1:
            gaps = np.diff(timestamps)
            bad = np.flatnonzero(gaps != self.freq_seconds)
            if bad.size:
                i = int(bad[0])
                raise NonUniformSampling(
                    f"gap of {int(gaps[i])} s after row {i} (expected {self.freq_seconds} s)"
                )

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def channels(self) -> int:
        return int(self.values.shape[1])

    def slice(self, start: int, stop: int) -> "SeriesFrame":
        return SeriesFrame(
            self.timestamps[start:stop],
            self.values[start:stop],
            self.channel_names,
            self.freq_seconds,
        )

    def with_values(self, values: np.ndarray) -> "SeriesFrame":
        return SeriesFrame(self.timestamps, values, self.channel_names, self.freq_seconds)


@dataclass(frozen=True)
class WindowSample:
    lookback: np.ndarray
    target: np.ndarray
    lookback_timestamps: np.ndarray
    target_timestamps: np.ndarray


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    val_fraction: float = 0.1
    test_fraction: float = 0.2

    def __post_init__(self):
        fractions = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(not 0.0 < f < 1.0 for f in fractions):
            raise ValueError(f"split fractions must lie in (0, 1), got {fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fractions)}")


@dataclass(frozen=True)
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(np.asarray(self.mean, dtype=np.float64)))
        object.__setattr__(self, "std", _frozen(np.asarray(self.std, dtype=np.float64)))
        if np.any(self.std <= 0):
            raise ZeroVariance("channel std must be strictly positive")


@dataclass(frozen=True)
class SourceData:
    """One dataset prepared for training: its metadata plus three splits."""

    meta: "DatasetMeta"
    train: SeriesFrame
    val: SeriesFrame
    test: SeriesFrame


@dataclass(frozen=True)
class WindowArrays:
    """Stacked windows of one frame (N windows)."""

    lookback: np.ndarray
    target: np.ndarray
    lookback_timestamps: np.ndarray
    target_timestamps: np.ndarray
    freq_seconds: int = 3600

    def __len__(self) -> int:
        return int(self.lookback.shape[0])


def _to_epoch_seconds(column: pd.Series) -> np.ndarray:
    if pd.api.types.is_integer_dtype(column):
        return column.to_numpy(dtype=np.int64)
    try:
        parsed = pd.to_datetime(column, utc=True)
    except (ValueError, TypeError) as e:
        raise NonNumericCell(f"unparseable timestamp: {e}") from e
    if parsed.isna().any():
        row = int(np.flatnonzero(parsed.isna().to_numpy())[0])
        raise NonNumericCell(f"unparseable timestamp at row {row}")
    epoch = pd.Timestamp("1970-01-01", tz="UTC")
    return ((parsed - epoch) // pd.Timedelta(seconds=1)).to_numpy(dtype=np.int64)


def load_csv(
    path: Union[str, Path], timestamp_column: str, freq_seconds: int
) -> SeriesFrame:
    """Load a CSV file into a SeriesFrame.

    Args:
        path: CSV file with a header row
        timestamp_column: Name of the ISO-8601 or epoch-seconds column
        freq_seconds: Expected sampling period

    Returns:
        SeriesFrame sorted by time

    Raises:
        EmptyFile, MissingColumn, NonNumericCell, NonUniformSampling
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise EmptyFile(f"{path} is empty") from e
    if df.empty:
        raise EmptyFile(f"{path} has a header but no rows")
    if timestamp_column not in df.columns:
        raise MissingColumn(f"column '{timestamp_column}' not found in {path}")

    timestamps = _to_epoch_seconds(df[timestamp_column])
    value_df = df.drop(columns=[timestamp_column])
    if value_df.shape[1] == 0:
        raise MissingColumn(f"{path} has no value columns")

    numeric = value_df.apply(pd.to_numeric, errors="coerce")
    bad = ~np.isfinite(numeric.to_numpy(dtype=np.float64))
    if bad.any():
        row, col = (int(i) for i in np.argwhere(bad)[0])
        raw = value_df.iat[row, col]
        raise NonNumericCell(
            f"row {row}, column '{value_df.columns[col]}': cannot use value {raw!r}"
        )

    order = np.argsort(timestamps, kind="stable")
    frame = SeriesFrame(
        timestamps=timestamps[order],
        values=numeric.to_numpy(dtype=np.float64)[order],
        channel_names=[str(c) for c in value_df.columns],
        freq_seconds=int(freq_seconds),
    )
    logger.debug(f"Loaded {path}: {frame.rows} rows x {frame.channels} channels")
    return frame


def chrono_split(
    frame: SeriesFrame, spec: SplitSpec, min_rows: int = 1
) -> Tuple[SeriesFrame, SeriesFrame, SeriesFrame]:
    """Split into train/val/test segments in time order.

    Boundaries are ``floor(fraction * rows)``; the remainder goes to test.
    ``min_rows`` is the shortest segment that can form one window (T + H).
    """
    n = frame.rows
    n_train = int(math.floor(spec.train_fraction * n + 1e-9))
    n_val = int(math.floor(spec.val_fraction * n + 1e-9))
    n_test = n - n_train - n_val
    for name, size in (("train", n_train), ("val", n_val), ("test", n_test)):
        if size < min_rows:
            raise SplitTooSmall(
                f"{name} split has {size} rows, needs at least {min_rows}"
            )
    return (
        frame.slice(0, n_train),
        frame.slice(n_train, n_train + n_val),
        frame.slice(n_train + n_val, n),
    )


def few_shot_subset(train: SeriesFrame, fraction: float, min_rows: int = 1) -> SeriesFrame:
    """Chronological head of the training split."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    rows = int(math.floor(fraction * train.rows + 1e-9))
    if rows < min_rows:
        raise SplitTooSmall(
            f"few-shot subset has {rows} rows, needs at least {min_rows}"
        )
    return train.slice(0, rows)


def fit_stats(train: Union[SeriesFrame, Sequence[SeriesFrame]]) -> ChannelStats:
    """Per-channel mean and population std of the training split(s)."""
    frames = [train] if isinstance(train, SeriesFrame) else list(train)
    values = np.concatenate([f.values for f in frames], axis=0)
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    flat = np.flatnonzero(std < 1e-12)
    if flat.size:
        names = [frames[0].channel_names[i] for i in flat]
        raise ZeroVariance(f"constant channel(s): {', '.join(names)}")
    return ChannelStats(mean=mean, std=std)


def standardize(frame: SeriesFrame, stats: ChannelStats) -> SeriesFrame:
    return frame.with_values((frame.values - stats.mean) / stats.std)


def destandardize(matrix: np.ndarray, stats: ChannelStats) -> np.ndarray:
    return np.asarray(matrix) * stats.std + stats.mean


def window_count(rows: int, T: int, H: int, stride: int) -> int:
    return (rows - T - H) // stride + 1


def _check_window_args(frame: SeriesFrame, T: int, H: int, stride: int) -> None:
    if T < 1 or H < 1 or stride < 1:
        raise ValueError(f"T, H and stride must be >= 1, got T={T}, H={H}, stride={stride}")
    if frame.rows < T + H:
        raise FrameTooShort(f"frame has {frame.rows} rows, needs at least T+H={T + H}")


def window_arrays(frame: SeriesFrame, T: int, H: int, stride: int = 1) -> WindowArrays:
    """All sliding windows of a frame as stacked (read-only) arrays."""
    _check_window_args(frame, T, H, stride)
    span = T + H
    # sliding_window_view puts the window axis last: (N, C, span)
    values = sliding_window_view(frame.values, span, axis=0)[::stride]
    values = np.moveaxis(values, -1, 1)
    stamps = sliding_window_view(frame.timestamps, span)[::stride]
    return WindowArrays(
        lookback=values[:, :T, :],
        target=values[:, T:, :],
        lookback_timestamps=stamps[:, :T],
        target_timestamps=stamps[:, T:],
        freq_seconds=frame.freq_seconds,
    )


def make_windows(frame: SeriesFrame, T: int, H: int, stride: int = 1) -> List[WindowSample]:
    arrays = window_arrays(frame, T, H, stride)
    return [
        WindowSample(
            lookback=arrays.lookback[i],
            target=arrays.target[i],
            lookback_timestamps=arrays.lookback_timestamps[i],
            target_timestamps=arrays.target_timestamps[i],
        )
        for i in range(len(arrays))
    ]


def validate_window_lengths(T: int, window_lengths: Sequence[int]) -> None:
    if not window_lengths:
        raise ValueError("at least one window length is required")
    if any(w < 1 for w in window_lengths):
        raise ValueError(f"window lengths must be >= 1, got {list(window_lengths)}")
    if window_lengths[0] > T:
        raise WindowExceedsLookback(
            f"longest window {window_lengths[0]} exceeds lookback {T}"
        )
    for a, b in zip(window_lengths, window_lengths[1:]):
        if b > a:
            raise NonDescendingWindows(
                f"window lengths must be non-increasing, got {list(window_lengths)}"
            )


def expert_views(lookback: np.ndarray, window_lengths: Sequence[int]) -> List[np.ndarray]:
    """Suffix views of a lookback, one per expert.

    Works on a single ``T x C`` lookback or a batch ``... x T x C``. The
    returned arrays are read-only views on the input.
    """
    lookback = np.asarray(lookback)
    T = lookback.shape[-2]
    validate_window_lengths(T, window_lengths)
    views = []
    for w in window_lengths:
        view = lookback[..., T - w:, :].view()
        view.flags.writeable = False
        views.append(view)
    return views


def window_schedule(max_length: int, num_experts: int, min_length: int = 8) -> List[int]:
    """Geometric halving schedule ``w_m = w_1 / 2**(m-1)``, floored at ``min_length``."""
    if num_experts < 1:
        raise ValueError("num_experts must be >= 1")
    floor = min(min_length, max_length)
    return [max(max_length // (2 ** m), floor) for m in range(num_experts)]


def select_channel(frame: SeriesFrame, channel: Optional[str]) -> SeriesFrame:
    """Restrict a frame to one channel.

    ``None`` or ``"all"`` keeps every channel; ``"last"`` picks the last
    column (the conventional target).
    """
    if channel is None or channel == "all":
        return frame
    if channel == "last":
        index = frame.channels - 1
    elif channel in frame.channel_names:
        index = frame.channel_names.index(channel)
    else:
        raise MissingColumn(f"channel '{channel}' not in {list(frame.channel_names)}")
    return SeriesFrame(
        frame.timestamps,
        frame.values[:, index:index + 1],
        [frame.channel_names[index]],
        frame.freq_seconds,
    )


@dataclass
class WindowSet:
    """Standardized windows of one or more sources, tagged by source index."""

    arrays: WindowArrays
    source_index: np.ndarray

    def __len__(self) -> int:
        return len(self.arrays)

    def take(self, index: np.ndarray) -> "WindowSet":
        a = self.arrays
        return WindowSet(
            WindowArrays(
                a.lookback[index], a.target[index], a.lookback_timestamps[index],
                a.target_timestamps[index], a.freq_seconds,
            ),
            self.source_index[index],
        )


def build_window_set(frames: Sequence[SeriesFrame], stats: ChannelStats, T: int, H: int,
                     stride: int = 1) -> WindowSet:
    parts = [window_arrays(standardize(f, stats), T, H, stride) for f in frames]
    freqs = {p.freq_seconds for p in parts}
    if len(freqs) != 1:
        raise NonUniformSampling(f"sources disagree on sampling period: {sorted(freqs)}")
    return WindowSet(
        WindowArrays(
            np.concatenate([p.lookback for p in parts]),
            np.concatenate([p.target for p in parts]),
            np.concatenate([p.lookback_timestamps for p in parts]),
            np.concatenate([p.target_timestamps for p in parts]),
            parts[0].freq_seconds,
        ),
        np.concatenate([np.full(len(p), i, dtype=np.int64) for i, p in enumerate(parts)]),
    )
