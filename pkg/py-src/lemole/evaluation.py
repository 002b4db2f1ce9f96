"""Metrics, forecasters and the experiment protocols built on them."""

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence, Union

import numpy as np
import pandas as pd

from .data import (
    ChannelStats,
    SeriesFrame,
    SourceData,
    WindowSet,
    build_window_set,
    destandardize,
    window_schedule,
)
from .errors import ShapeMismatch
from .model import LemoleModel, count_params
from .prompts import DatasetMeta
from .providers import EmbeddingCache
from .training import Conditioner, TrainConfig, predict_window_set, source_stats, train

logger = logging.getLogger(__name__)

# windows per evaluation chunk, independent of the worker count
CHUNK_WINDOWS = 256

ABLATION_VARIANTS = {
    "full": ("static", "dynamic"),
    "-static": ("dynamic",),
    "-dynamic": ("static",),
    "-both": (),
}


def _check(pred: np.ndarray, target: np.ndarray):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {target.shape}")
    return pred, target


def mae(pred: np.ndarray, target: np.ndarray) -> float:
    pred, target = _check(pred, target)
    return float(np.mean(np.abs(pred - target)))


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    pred, target = _check(pred, target)
    return float(np.mean((pred - target) ** 2))


@dataclass
class MetricReport:
    horizon: int
    mse: float
    mae: float
    n_windows: int
    dataset: str = ""
    config_hash: str = ""
    raw_mse: Optional[float] = None
    raw_mae: Optional[float] = None

    def __post_init__(self):
        if self.mse < 0 or self.mae < 0:
            raise ValueError("metrics must be non-negative")
        if self.n_windows < 1:
            raise ValueError("a report needs at least one window")

    def to_row(self) -> Dict[str, Any]:
        row = dataclasses.asdict(self)
        if self.raw_mse is None:
            row.pop("raw_mse")
            row.pop("raw_mae")
        return row


class Forecaster(Protocol):
    horizon: int

    def predict(self, windows: WindowSet) -> np.ndarray:
        ...


class LemoleForecaster:
    """A trained model plus the embeddings it is conditioned on."""

    def __init__(self, model: LemoleModel, encoder: EmbeddingCache,
                 metas: Sequence[DatasetMeta], batch_size: int = 256):
        self.model = model
        self.conditioner = Conditioner(encoder, metas)
        self.batch_size = batch_size
        self.horizon = model.hyper.H

    def predict(self, windows: WindowSet) -> np.ndarray:
        return predict_window_set(self.model, self.conditioner, windows, self.batch_size)


class PersistenceForecaster:
    """Repeats the last observed value over the horizon."""

    def __init__(self, horizon: int):
        self.horizon = horizon

    def predict(self, windows: WindowSet) -> np.ndarray:
        last = windows.arrays.lookback[:, -1:, :]
        return np.repeat(last, self.horizon, axis=1)


def _chunk_errors(forecaster: Forecaster, windows: WindowSet,
                  stats: Optional[ChannelStats]) -> np.ndarray:
    """Sums of squared and absolute errors for one chunk (standardized, then raw)."""
    pred = forecaster.predict(windows)
    target = windows.arrays.target
    _check(pred, target)
    sums = [np.sum((pred - target) ** 2), np.sum(np.abs(pred - target))]
    if stats is not None:
        raw_pred = destandardize(pred, stats)
        raw_target = destandardize(target, stats)
        sums += [np.sum((raw_pred - raw_target) ** 2), np.sum(np.abs(raw_pred - raw_target))]
    return np.asarray(sums)


def evaluate(forecaster: Forecaster, test: Union[SeriesFrame, Sequence[SeriesFrame]],
             stats: ChannelStats, T: int, H: int, stride: int = 1, threads: int = 1,
             raw_metrics: bool = False, dataset: str = "",
             config_hash: str = "") -> MetricReport:
    """Score a forecaster on every test window.

    Metrics are on the standardized scale; ``raw_metrics`` adds the
    destandardized ones. Windows are split into fixed-size chunks scored on
    up to ``threads`` workers and reduced in chunk order.
    """
    frames = [test] if isinstance(test, SeriesFrame) else list(test)
    windows = build_window_set(frames, stats, T, H, stride)
    threads = max(1, int(threads))
    n_chunks = -(-len(windows) // CHUNK_WINDOWS)
    chunks = [windows.take(idx) for idx in np.array_split(np.arange(len(windows)), n_chunks)]
    raw_stats = stats if raw_metrics else None
    if threads == 1:
        partials = [_chunk_errors(forecaster, c, raw_stats) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(lambda c: _chunk_errors(forecaster, c, raw_stats), chunks))
    totals = np.zeros_like(partials[0])
    for part in partials:
        totals = totals + part

    size = len(windows) * H * windows.arrays.target.shape[-1]
    report = MetricReport(
        horizon=H,
        mse=float(totals[0] / size),
        mae=float(totals[1] / size),
        n_windows=len(windows),
        dataset=dataset,
        config_hash=config_hash,
    )
    if raw_metrics:
        report.raw_mse = float(totals[2] / size)
        report.raw_mae = float(totals[3] / size)
    return report


@dataclass
class ExperimentContext:
    """What every protocol runner shares: data, encoder and evaluation settings."""

    sources: Sequence[SourceData]
    encoder: EmbeddingCache
    stats: Optional[ChannelStats] = None
    eval_stride: int = 1
    threads: int = 1
    raw_metrics: bool = False
    config_hash: str = ""

    def __post_init__(self):
        if self.stats is None:
            self.stats = source_stats(self.sources)

    @property
    def dataset(self) -> str:
        return "+".join(s.meta.name for s in self.sources)


def train_and_evaluate(config: TrainConfig, ctx: ExperimentContext):
    """Train on ``ctx.sources`` and evaluate on their pooled test splits."""
    model, history = train(config, ctx.sources, ctx.encoder, ctx.stats)
    forecaster = LemoleForecaster(model, ctx.encoder, [s.meta for s in ctx.sources])
    report = evaluate(
        forecaster, [s.test for s in ctx.sources], ctx.stats, config.T, config.H,
        ctx.eval_stride, ctx.threads, ctx.raw_metrics, ctx.dataset, ctx.config_hash,
    )
    return model, history, report


def degradation(variant_mse: float, full_mse: float) -> float:
    """Percentage increase of a variant's MSE over the full model's."""
    if full_mse == 0:
        return 0.0 if variant_mse == 0 else float("inf")
    return (variant_mse - full_mse) / full_mse * 100.0


def ablate(config: TrainConfig, ctx: ExperimentContext,
           variants: Sequence[str] = tuple(ABLATION_VARIANTS)) -> List[Dict[str, Any]]:
    """Train the prompt-ablation variants with a shared seed and data.

    Dropping a branch removes its generators and its fusion channel.
    """
    unknown = [v for v in variants if v not in ABLATION_VARIANTS]
    if unknown:
        raise ValueError(f"unknown ablation variants {unknown}")
    rows = []
    full_mse = None
    for variant in ["full"] + [v for v in variants if v != "full"]:
        variant_config = dataclasses.replace(config, branches=ABLATION_VARIANTS[variant])
        model, _, report = train_and_evaluate(variant_config, ctx)
        if variant == "full":
            full_mse = report.mse
        row = {"variant": variant, **report.to_row(), "params": count_params(model)}
        row["degradation_pct"] = degradation(report.mse, full_mse)
        logger.info(f"ablation {variant:>8}: mse={report.mse:.6f} mae={report.mae:.6f}")
        rows.append(row)
    return rows


def expert_sweep(config: TrainConfig, ctx: ExperimentContext,
                 m_values: Sequence[int] = (1, 2, 3, 4, 5)) -> List[Dict[str, Any]]:
    """One run per expert count, each with the halving window schedule."""
    longest = config.window_lengths[0] if config.window_lengths else config.T
    rows = []
    for m in m_values:
        lengths = window_schedule(longest, int(m), config.min_window)
        sweep_config = dataclasses.replace(config, M=int(m), window_lengths=lengths)
        model, _, report = train_and_evaluate(sweep_config, ctx)
        logger.info(f"M={m} windows={lengths}: mse={report.mse:.6f}")
        rows.append({
            "M": int(m),
            "mse": report.mse,
            "mae": report.mae,
            "params": count_params(model),
            "window_lengths": " ".join(str(w) for w in lengths),
        })
    return rows


def horizon_sweep(config: TrainConfig, ctx: ExperimentContext,
                  horizons: Sequence[int] = (96, 192, 336, 720)) -> List[Dict[str, Any]]:
    """Long-range protocol: one trained model per forecast horizon."""
    rows = []
    for H in horizons:
        sweep_config = dataclasses.replace(config, H=int(H))
        model, _, report = train_and_evaluate(sweep_config, ctx)
        logger.info(f"H={H}: mse={report.mse:.6f} mae={report.mae:.6f}")
        rows.append({**report.to_row(), "M": config.M, "params": count_params(model)})
    return rows


def compare_domains(config: TrainConfig, ctx: ExperimentContext,
                    horizons: Optional[Sequence[int]] = None) -> List[Dict[str, Any]]:
    """Time-domain against frequency-domain experts on identical data.

    With ``horizons`` each domain runs the long-range protocol, one row per
    (domain, horizon); otherwise both train at ``config.H``.
    """
    rows = []
    for domain in ("time", "frequency"):
        domain_config = dataclasses.replace(config, expert_domain=domain)
        if horizons:
            sweep = horizon_sweep(domain_config, ctx, horizons)
            rows += [{"domain": domain, **row} for row in sweep]
            continue
        model, _, report = train_and_evaluate(domain_config, ctx)
        rows.append({"domain": domain, **report.to_row(), "params": count_params(model)})
    return rows


def write_reports(rows: Sequence[Dict[str, Any]], out_dir: Union[str, Path],
                  stem: str) -> List[Path]:
    """Write ``<stem>.csv`` (plot-ready) and ``<stem>.json`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    json_path = out / f"{stem}.json"
    pd.DataFrame(list(rows)).to_csv(csv_path, index=False)
    json_path.write_text(json.dumps(list(rows), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote {csv_path} and {json_path}")
    return [csv_path, json_path]
