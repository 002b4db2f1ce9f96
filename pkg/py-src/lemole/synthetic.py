"""Seeded synthetic datasets: the bundled sinusoid, regime pairs and unit-root fixtures."""

import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import pandas as pd

from .data import SeriesFrame
from .prompts import DATASET_PRESETS, DatasetMeta

logger = logging.getLogger(__name__)

DEFAULT_START = "2016-07-01T00:00:00Z"


def epoch_seconds(iso: str) -> int:
    stamp = pd.Timestamp(iso)
    if stamp.tzinfo is None:
        stamp = stamp.tz_localize("UTC")
    return int(stamp.timestamp())


def _timestamps(rows: int, start: str, freq_seconds: int) -> np.ndarray:
    return epoch_seconds(start) + np.arange(rows, dtype=np.int64) * freq_seconds


def sinusoid_frame(rows: int = 2000, period: float = 24, trend: float = 0.0005,
                   noise: float = 0.1, channels: int = 1, seed: int = 7,
                   start: str = DEFAULT_START, freq_seconds: int = 3600) -> SeriesFrame:
    """``sin(2 pi t / period + phase_c) + trend * t + noise``, one phase per channel."""
    rng = np.random.default_rng(seed)
    t = np.arange(rows, dtype=np.float64)[:, None]
    phases = np.arange(channels, dtype=np.float64)[None, :] * (np.pi / 4)
    values = np.sin(2.0 * np.pi * t / period + phases) + trend * t
    if noise > 0:
        values = values + rng.normal(0.0, noise, size=values.shape)
    names = ["value"] + [f"value_{c}" for c in range(1, channels)]
    return SeriesFrame(_timestamps(rows, start, freq_seconds), values, names, freq_seconds)


def regime_pair(rows: int = 600, level: float = 1.0, noise: float = 1.0, seed: int = 11,
                start: str = DEFAULT_START,
                freq_seconds: int = 3600) -> Tuple[Tuple[SeriesFrame, DatasetMeta],
                                                   Tuple[SeriesFrame, DatasetMeta]]:
    """Two noisy constant-level series whose level is only stated in their descriptions.

    Both share timestamps, so dynamic prompts carry no regime information,
    and both descriptions render to the same number of tokens.
    """
    rng = np.random.default_rng(seed)
    stamps = _timestamps(rows, start, freq_seconds)
    pairs = []
    for sign, word in ((1.0, "upper"), (-1.0, "lower")):
        values = sign * level + rng.normal(0.0, noise, size=(rows, 1))
        frame = SeriesFrame(stamps, values, ["value"], freq_seconds)
        meta = DatasetMeta(
            f"regime-{word}",
            f"Sensor readings that fluctuate around the {word} operating level.",
            (("value", "sensor reading"),),
        )
        pairs.append((frame, meta))
    return pairs[0], pairs[1]


def random_walk(n: int = 2000, seed: int = 3, drift: float = 0.0) -> np.ndarray:
    return np.cumsum(drift + np.random.default_rng(seed).standard_normal(n))


def white_noise(n: int = 2000, seed: int = 3) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(n)


def series_frame(values: np.ndarray, name: str = "value", start: str = DEFAULT_START,
                 freq_seconds: int = 3600) -> SeriesFrame:
    values = np.asarray(values, dtype=np.float64).reshape(len(values), -1)
    names = [name] + [f"{name}_{c}" for c in range(1, values.shape[1])]
    return SeriesFrame(_timestamps(values.shape[0], start, freq_seconds), values, names,
                       freq_seconds)


def write_csv(frame: SeriesFrame, path: Union[str, Path],
              timestamp_column: str = "date") -> Path:
    """Write a frame with ISO-8601 UTC timestamps."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(frame.values, columns=list(frame.channel_names))
    stamps = pd.to_datetime(frame.timestamps, unit="s", utc=True)
    df.insert(0, timestamp_column, stamps.strftime("%Y-%m-%dT%H:%M:%SZ"))
    df.to_csv(path, index=False)
    logger.info(f"Wrote {frame.rows} rows to {path}")
    return path


def synthetic_meta() -> DatasetMeta:
    return DATASET_PRESETS["synthetic"]
