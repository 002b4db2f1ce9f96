"""End-to-end runs: turn a resolved config into data, models and artifacts."""

import dataclasses
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from .adf import AdfResult, adf_statistic
from .bench import bench, bench_random_batch
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .checks import run_all_checks
from .config import Config
from .data import (
    SeriesFrame,
    SourceData,
    SplitSpec,
    chrono_split,
    load_csv,
    select_channel,
)
from .errors import ConfigError, MissingArtifact, MissingColumn, NonNumericCell
from .evaluation import (
    ExperimentContext,
    LemoleForecaster,
    PersistenceForecaster,
    ablate,
    compare_domains,
    evaluate,
    expert_sweep,
    horizon_sweep,
    write_reports,
)
from .prompts import DATASET_PRESETS, DatasetMeta
from .providers import EmbeddingCache, build_provider
from .synthetic import sinusoid_frame, write_csv
from .training import Conditioner, TrainConfig, source_stats, train

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.json"
HISTORY_FILE = "history.csv"
RESOLVED_CONFIG_FILE = "resolved_config.yaml"


def validate(config: Config) -> None:
    """Raise ConfigError listing every failed check."""
    success, messages = run_all_checks(config)
    if not success:
        raise ConfigError([m for m in messages if not m.startswith("✓")])


def dataset_meta(config: Config, channel_names: List[str]) -> DatasetMeta:
    """Static-prompt metadata: preset values overridden by the dataset section."""
    preset = DATASET_PRESETS.get(config.get("dataset.preset") or "")
    name = config.get("dataset.name") or (preset.name if preset else None)
    description = config.get("dataset.description") or (preset.description if preset else None)
    if not name or not description:
        raise ConfigError(["dataset.name and dataset.description are required without a preset"])
    channels = dict(preset.channels) if preset else {}
    channels.update(config.get("dataset.channel_descriptions") or {})
    return DatasetMeta(name, description, tuple(channels.items())).for_channels(channel_names)


def synthetic_frame(config: Config) -> SeriesFrame:
    return sinusoid_frame(
        rows=int(config.get("synthetic.rows")),
        period=float(config.get("synthetic.period")),
        trend=float(config.get("synthetic.trend")),
        noise=float(config.get("synthetic.noise")),
        channels=int(config.get("synthetic.channels")),
        seed=int(config.get("synthetic.seed")),
        start=config.get("synthetic.start"),
        freq_seconds=int(config.get("dataset.freq_seconds")),
    )


def load_frame(config: Config) -> SeriesFrame:
    path = config.get("dataset.path")
    if path is None:
        frame = synthetic_frame(config)
    else:
        frame = load_csv(
            path, config.get("dataset.timestamp_column"), int(config.get("dataset.freq_seconds"))
        )
    return select_channel(frame, config.get("dataset.channel"))


def load_sources(config: Config, T: int, H: int) -> List[SourceData]:
    frame = load_frame(config)
    spec = SplitSpec(
        float(config.get("split.train")), float(config.get("split.val")),
        float(config.get("split.test")),
    )
    train_split, val_split, test_split = chrono_split(frame, spec, min_rows=T + H)
    meta = dataset_meta(config, list(frame.channel_names))
    return [SourceData(meta, train_split, val_split, test_split)]


def make_encoder(config: Config) -> EmbeddingCache:
    return EmbeddingCache(build_provider(config), int(config.get("provider.cache_size")))


def experiment_context(config: Config, train_config: TrainConfig,
                       encoder: Optional[EmbeddingCache] = None) -> ExperimentContext:
    sources = load_sources(config, train_config.T, train_config.H)
    return ExperimentContext(
        sources=sources,
        encoder=encoder or make_encoder(config),
        eval_stride=int(config.get("eval.stride")),
        threads=int(config.get("eval.threads")),
        raw_metrics=bool(config.get("eval.raw_metrics")),
        config_hash=config.digest(),
    )


def out_dir(config: Config) -> Path:
    path = Path(config.get("output.dir"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def save_resolved(config: Config) -> Path:
    path = out_dir(config) / RESOLVED_CONFIG_FILE
    config.save(str(path))
    return path


def run_train(config: Config) -> Dict[str, Path]:
    """Train and write the checkpoint, history CSV and resolved config."""
    validate(config)
    train_config = TrainConfig.from_config(config)
    encoder = make_encoder(config)
    sources = load_sources(config, train_config.T, train_config.H)
    stats = source_stats(sources)
    model, history = train(train_config, sources, encoder, stats)

    out = out_dir(config)
    ckpt = Checkpoint(
        model=model,
        stats=stats,
        channel_names=list(sources[0].train.channel_names),
        sources=[s.meta for s in sources],
        provider_id=encoder.provider.provider_id,
        cutoff_bins=train_config.cutoff_bins,
    )
    paths = {
        "checkpoint": save_checkpoint(ckpt, out / CHECKPOINT_FILE),
        "history": history.to_csv(out / HISTORY_FILE, bool(config.get("output.history_timings"))),
        "config": save_resolved(config),
    }
    for name, path in paths.items():
        logger.info(f"Wrote {name}: {path}")
    return paths


def _load_for_config(checkpoint_path: str, config: Config) -> Checkpoint:
    ckpt = load_checkpoint(checkpoint_path)
    h = ckpt.model.hyper
    config.update({"model": {
        "lookback": h.T, "horizon": h.H, "num_experts": h.M,
        "window_lengths": [int(w) for w in ckpt.model.bank.window_lengths],
        "expert_domain": ckpt.model.domain,
        "conditioning_mode": ckpt.model.conditioning_mode,
        "branches": list(ckpt.model.branches),
        "kernel_size": h.kernel_size,
    }})
    return ckpt


def run_evaluate(config: Config, checkpoint_path: str) -> List[Dict[str, Any]]:
    """Score a checkpoint and the persistence baseline on the test split."""
    ckpt = _load_for_config(checkpoint_path, config)
    validate(config)
    model = ckpt.model
    h = model.hyper
    encoder = make_encoder(config)
    if ckpt.provider_id and ckpt.provider_id != encoder.provider.provider_id:
        logger.warning(
            f"Checkpoint was trained with provider {ckpt.provider_id}, "
            f"evaluating with {encoder.provider.provider_id}"
        )
    sources = load_sources(config, h.T, h.H)
    tests = [s.test for s in sources]
    kwargs = dict(
        stride=int(config.get("eval.stride")), threads=int(config.get("eval.threads")),
        raw_metrics=bool(config.get("eval.raw_metrics")), config_hash=config.digest(),
    )
    rows = []
    for variant, forecaster in (
        ("lemole", LemoleForecaster(model, encoder, [s.meta for s in sources])),
        ("persistence", PersistenceForecaster(h.H)),
    ):
        report = evaluate(forecaster, tests, ckpt.stats, h.T, h.H,
                          dataset="+".join(s.meta.name for s in sources), **kwargs)
        rows.append({"variant": variant, **report.to_row()})
    write_reports(rows, out_dir(config), "evaluate")
    save_resolved(config)
    return rows


def run_ablate(config: Config) -> List[Dict[str, Any]]:
    validate(config)
    train_config = TrainConfig.from_config(config)
    rows = ablate(train_config, experiment_context(config, train_config))
    write_reports(rows, out_dir(config), "ablation")
    save_resolved(config)
    return rows


def run_sweep(config: Config, m_values: Optional[List[int]] = None) -> List[Dict[str, Any]]:
    validate(config)
    train_config = TrainConfig.from_config(config)
    m_values = m_values or [int(m) for m in config.get("eval.m_values")]
    rows = expert_sweep(train_config, experiment_context(config, train_config), m_values)
    write_reports(rows, out_dir(config), "sweep")
    save_resolved(config)
    return rows


def run_horizons(config: Config, horizons: Optional[List[int]] = None) -> List[Dict[str, Any]]:
    validate(config)
    horizons = horizons or [int(h) for h in config.get("eval.horizons")]
    train_config = TrainConfig.from_config(config)
    # every horizon must fit in each split
    ctx = experiment_context(config, dataclasses.replace(train_config, H=max(horizons)))
    rows = horizon_sweep(train_config, ctx, horizons)
    write_reports(rows, out_dir(config), "horizons")
    save_resolved(config)
    return rows


def run_domains(config: Config, horizons: Optional[List[int]] = None) -> List[Dict[str, Any]]:
    validate(config)
    train_config = TrainConfig.from_config(config)
    longest = max(horizons) if horizons else train_config.H
    ctx = experiment_context(config, dataclasses.replace(train_config, H=longest))
    rows = compare_domains(train_config, ctx, horizons)
    write_reports(rows, out_dir(config), "domains")
    save_resolved(config)
    return rows


def read_column(csv_path: str, column: str) -> np.ndarray:
    path = Path(csv_path)
    if not path.is_file():
        raise MissingArtifact(f"CSV not found: {path}")
    df = pd.read_csv(path)
    if column not in df.columns:
        raise MissingColumn(f"column '{column}' not found in {path}")
    values = pd.to_numeric(df[column], errors="coerce").to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        row = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NonNumericCell(f"row {row}, column '{column}' is not numeric")
    return values


def run_adf(config: Config, csv_path: str, column: str,
            max_lag: Optional[int] = None) -> AdfResult:
    result = adf_statistic(read_column(csv_path, column), max_lag)
    row = {
        "file": str(csv_path), "column": column, "statistic": result.statistic,
        "lag_order": result.lag_order, "p_bucket": result.p_bucket, "n_obs": result.n_obs,
    }
    write_reports([row], out_dir(config), "adf")
    save_resolved(config)
    return result


def run_bench(config: Config, checkpoint_path: str, reps: Optional[int] = None) -> Dict[str, Any]:
    ckpt = load_checkpoint(checkpoint_path)
    model = ckpt.model
    reps = int(reps or config.get("eval.bench_reps"))
    encoder = make_encoder(config)
    metas = ckpt.sources or [dataset_meta(config, ckpt.channel_names)]
    conditioner = Conditioner(encoder, metas[:1])
    batch = bench_random_batch(model, int(config.get("training.batch_size")),
                               seed=int(config.get("training.seed")))
    result = bench(model, batch, conditioner, reps)
    write_reports([result], out_dir(config), "bench")
    save_resolved(config)
    return result


def run_generate(config: Config, path: str) -> Path:
    """Write the bundled synthetic dataset described by the synthetic section."""
    if config.get("dataset.path") is not None:
        raise ConfigError(["generate writes the synthetic dataset; unset dataset.path"])
    return write_csv(synthetic_frame(config), path, config.get("dataset.timestamp_column"))
