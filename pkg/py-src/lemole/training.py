"""Loss, Adam, the training loop and finite-difference gradient checks."""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import Config
from .data import (
    ChannelStats,
    SourceData,
    WindowArrays,
    WindowSet,
    build_window_set,
    few_shot_subset,
    fit_stats,
    validate_window_lengths,
    window_schedule,
)
from .errors import ConfigError, DivergenceDetected, EmbeddingShapeInvalid, ShapeMismatch
from .model import (
    CONDITIONING_MODES,
    PER_EXPERT,
    LemoleModel,
    ModelHyper,
    build_model,
    model_backward,
    model_forward,
)
from .prompts import DatasetMeta
from .providers import EmbeddingCache

logger = logging.getLogger(__name__)

# gradient entries at or below this magnitude are skipped by the per-entry ratio
ENTRY_FLOOR = 1e-6


@dataclass
class TrainConfig:
    """Hyper-parameters of one training run."""

    T: int = 96
    H: int = 96
    M: int = 3
    window_lengths: Optional[List[int]] = None
    min_window: int = 8
    expert_domain: str = "time"
    conditioning_mode: str = "aggregate"
    kernel_size: int = 3
    cutoff_bins: Optional[int] = None
    branches: Tuple[str, ...] = ("static", "dynamic")
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    early_stop_patience: int = 5
    seed: int = 2024
    few_shot_fraction: float = 1.0
    train_stride: int = 1
    val_stride: int = 1

    def __post_init__(self):
        self.adam_betas = tuple(float(b) for b in self.adam_betas)
        self.branches = tuple(self.branches)
        if self.window_lengths is not None:
            self.window_lengths = [int(w) for w in self.window_lengths]
        errors = self.validate()
        if errors:
            raise ConfigError(errors)

    def validate(self) -> List[str]:
        errors = []
        if self.learning_rate <= 0:
            errors.append(f"training.learning_rate must be > 0, got {self.learning_rate}")
        if len(self.adam_betas) != 2 or any(not 0.0 <= b < 1.0 for b in self.adam_betas):
            errors.append(f"training.adam_betas must lie in [0, 1), got {list(self.adam_betas)}")
        if self.batch_size < 1:
            errors.append(f"training.batch_size must be >= 1, got {self.batch_size}")
        if self.early_stop_patience < 1:
            errors.append(
                f"training.early_stop_patience must be >= 1, got {self.early_stop_patience}"
            )
        if self.epochs < 0:
            errors.append(f"training.epochs must be >= 0, got {self.epochs}")
        if self.T < 1 or self.H < 1 or self.M < 1:
            errors.append("model.lookback, horizon and num_experts must be >= 1")
        if self.expert_domain not in ("time", "frequency"):
            errors.append(f"model.expert_domain must be time or frequency, got '{self.expert_domain}'")
        if self.conditioning_mode not in CONDITIONING_MODES:
            errors.append(
                f"model.conditioning_mode must be one of {list(CONDITIONING_MODES)}, "
                f"got '{self.conditioning_mode}'"
            )
        if self.kernel_size not in (1, 3, 5, 7, 9):
            errors.append(f"model.kernel_size must be odd and <= 9, got {self.kernel_size}")
        unknown = [b for b in self.branches if b not in ("static", "dynamic")]
        if unknown:
            errors.append(f"model.branches has unknown entries {unknown}")
        if self.window_lengths is not None and len(self.window_lengths) != self.M:
            errors.append(
                f"model.window_lengths has {len(self.window_lengths)} entries for "
                f"num_experts={self.M}"
            )
        return errors

    @property
    def resolved_window_lengths(self) -> List[int]:
        lengths = self.window_lengths or window_schedule(self.T, self.M, self.min_window)
        validate_window_lengths(self.T, lengths)
        return lengths

    @classmethod
    def from_config(cls, config: Config) -> "TrainConfig":
        return cls(
            T=int(config.get("model.lookback")),
            H=int(config.get("model.horizon")),
            M=int(config.get("model.num_experts")),
            window_lengths=config.get("model.window_lengths"),
            min_window=int(config.get("model.min_window")),
            expert_domain=config.get("model.expert_domain"),
            conditioning_mode=config.get("model.conditioning_mode"),
            kernel_size=int(config.get("model.kernel_size")),
            cutoff_bins=config.get("model.freq_cutoff_bins"),
            branches=tuple(config.get("model.branches") or ()),
            epochs=int(config.get("training.epochs")),
            batch_size=int(config.get("training.batch_size")),
            learning_rate=float(config.get("training.learning_rate")),
            adam_betas=tuple(config.get("training.adam_betas")),
            adam_eps=float(config.get("training.adam_eps")),
            early_stop_patience=int(config.get("training.early_stop_patience")),
            seed=int(config.get("training.seed")),
            few_shot_fraction=float(config.get("training.few_shot_fraction")),
            train_stride=int(config.get("training.train_stride")),
            val_stride=int(config.get("eval.stride")),
        )


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(state: AdamState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              config: TrainConfig) -> Dict[str, np.ndarray]:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    beta1, beta2 = config.adam_betas
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {grad.shape}, param {param.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * grad
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * grad ** 2
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        param -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return params


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    ms: float


@dataclass
class TrainHistory:
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    stopped_early: bool = False

    def __len__(self) -> int:
        return len(self.records)

    @property
    def train_losses(self) -> List[float]:
        return [r.train_mse for r in self.records]

    @property
    def val_losses(self) -> List[float]:
        return [r.val_mse for r in self.records]

    def to_frame(self, timings: bool = False) -> pd.DataFrame:
        columns = ["epoch", "train_mse", "val_mse"] + (["ms"] if timings else [])
        rows = [
            [r.epoch, r.train_mse, r.val_mse] + ([r.ms] if timings else [])
            for r in self.records
        ]
        return pd.DataFrame(rows, columns=columns)

    def to_csv(self, path: Union[str, Path], timings: bool = False) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame(timings).to_csv(path, index=False)
        return path


def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean squared error over every entry and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def source_stats(sources: Sequence[SourceData]) -> ChannelStats:
    """Channel statistics pooled over every source's full training split."""
    return fit_stats([s.train for s in sources])


class Conditioner:
    """Assembles the frozen embeddings a model needs for a batch of windows."""

    def __init__(self, encoder: EmbeddingCache, metas: Sequence[DatasetMeta]):
        self.encoder = encoder
        self.metas = list(metas)
        statics = [encoder.static(meta).matrix for meta in self.metas]
        shapes = {z.shape for z in statics}
        if len(shapes) != 1:
            raise EmbeddingShapeInvalid(
                f"static prompts of the sources differ in shape: {sorted(shapes)}; "
                "their descriptions must render to the same token count"
            )
        self.statics = np.stack(statics)
        self.statics.flags.writeable = False

    @property
    def d_llm(self) -> int:
        return int(self.statics.shape[-1])

    @property
    def static_tokens(self) -> int:
        return int(self.statics.shape[1])

    def dynamic_tokens(self, arrays: WindowArrays) -> int:
        return self.encoder.dynamic(arrays.lookback_timestamps[0], arrays.freq_seconds).tokens

    def static_for(self, source_index: np.ndarray) -> np.ndarray:
        if np.all(source_index == source_index[0]):
            return self.statics[int(source_index[0])]
        return self.statics[source_index]

    def dynamic_for(self, model: LemoleModel, arrays: WindowArrays):
        if "dynamic" not in model.branches:
            return None
        if model.conditioning_mode == PER_EXPERT:
            return [
                self.encoder.dynamic_batch(arrays.lookback_timestamps, arrays.freq_seconds, w)
                for w in model.bank.window_lengths
            ]
        return self.encoder.dynamic_batch(arrays.lookback_timestamps, arrays.freq_seconds)

    def inputs(self, model: LemoleModel, batch: WindowSet):
        z_static = self.static_for(batch.source_index) if "static" in model.branches else None
        return z_static, self.dynamic_for(model, batch.arrays)


def predict_window_set(model: LemoleModel, conditioner: Conditioner, windows: WindowSet,
                       batch_size: int = 256) -> np.ndarray:
    outputs = []
    for start in range(0, len(windows), batch_size):
        batch = windows.take(np.arange(start, min(start + batch_size, len(windows))))
        z_static, z_dynamic = conditioner.inputs(model, batch)
        pred, _ = model_forward(model, batch.arrays.lookback, z_static, z_dynamic)
        outputs.append(pred)
    return np.concatenate(outputs)


def _snapshot(params: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {name: value.copy() for name, value in params.items()}


def _restore(params: Dict[str, np.ndarray], saved: Dict[str, np.ndarray]) -> None:
    for name, value in saved.items():
        params[name][...] = value


def train(config: TrainConfig, sources: Sequence[SourceData], encoder: EmbeddingCache,
          stats: Optional[ChannelStats] = None) -> Tuple[LemoleModel, TrainHistory]:
    """Train a LeMoLE model on one or more sources.

    Args:
        config: Hyper-parameters and seed
        sources: Datasets sharing a channel layout; each brings its own static prompt
        encoder: Frozen embedding cache
        stats: Normalization statistics; pooled over the training splits when omitted

    Returns:
        (model, history) with the parameters of the best validation epoch
    """
    if not sources:
        raise ValueError("train needs at least one source")
    if stats is None:
        stats = source_stats(sources)
    T, H = config.T, config.H
    window_lengths = config.resolved_window_lengths
    train_frames = [
        few_shot_subset(s.train, config.few_shot_fraction, min_rows=T + H) for s in sources
    ]
    train_set = build_window_set(train_frames, stats, T, H, config.train_stride)
    val_set = build_window_set([s.val for s in sources], stats, T, H, config.val_stride)

    conditioner = Conditioner(encoder, [s.meta for s in sources])
    hyper = ModelHyper(
        T=T, H=H, C=train_frames[0].channels, M=config.M, d_llm=conditioner.d_llm,
        L_S=conditioner.static_tokens, L_D=conditioner.dynamic_tokens(train_set.arrays),
        kernel_size=config.kernel_size,
    )
    rng = np.random.default_rng(config.seed)
    model = build_model(
        rng, hyper, window_lengths, config.expert_domain, config.conditioning_mode,
        config.branches, config.cutoff_bins,
    )
    params = model.parameters()
    logger.info(
        f"Training {config.expert_domain}-domain LeMoLE: M={config.M} windows={window_lengths} "
        f"T={T} H={H} on {len(train_set)} windows ({len(val_set)} validation)"
    )

    history = TrainHistory()
    state = AdamState()
    best_val = np.inf
    best_params = _snapshot(params)
    stale = 0
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(len(train_set))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = train_set.take(order[start:start + config.batch_size])
            z_static, z_dynamic = conditioner.inputs(model, batch)
            pred, trace = model_forward(model, batch.arrays.lookback, z_static, z_dynamic)
            loss, grad = mse_loss(pred, batch.arrays.target)
            if not np.isfinite(loss):
                raise DivergenceDetected(
                    f"non-finite training loss at epoch {epoch}, step {state.step}; "
                    f"try a smaller learning rate (now {config.learning_rate})"
                )
            adam_step(state, params, model_backward(model, trace, grad), config)
            total += loss * len(batch)

        train_mse = total / len(train_set)
        val_pred = predict_window_set(model, conditioner, val_set)
        val_mse, _ = mse_loss(val_pred, val_set.arrays.target)
        if not np.isfinite(val_mse):
            raise DivergenceDetected(f"non-finite validation loss at epoch {epoch}")
        ms = (time.perf_counter() - started) * 1000.0
        history.records.append(EpochRecord(epoch, train_mse, val_mse, ms))
        logger.info(
            f"epoch {epoch:3d}  train_mse={train_mse:.6f}  val_mse={val_mse:.6f}  ({ms:.0f} ms)"
        )

        if val_mse < best_val:
            best_val = val_mse
            best_params = _snapshot(params)
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                history.stopped_early = True
                logger.info(f"Early stop at epoch {epoch}; best epoch {history.best_epoch}")
                break

    _restore(params, best_params)
    return model, history


@dataclass
class GradCheckReport:
    """Per-tensor errors plus the largest per-entry ratio ``|a - n| / (|a| + 1e-8)``."""

    max_error: float
    worst_param: str
    errors: Dict[str, float]
    max_entry_error: float = 0.0

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_error < tolerance


def _sample_loss(model: LemoleModel, lookback, target, z_static, z_dynamic) -> float:
    pred, _ = model_forward(model, lookback, z_static, z_dynamic)
    loss, _ = mse_loss(pred, target)
    return loss


def grad_check(model: LemoleModel, sample: Tuple, eps: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``sample`` is ``(lookback, target, z_static, z_dynamic)``. The error of a
    tensor is ``max|a - n| / max(max|a|, max|n|, 1e-8)``. The report also
    carries the largest per-entry ratio over entries with ``|a| > ENTRY_FLOOR``.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    lookback, target, z_static, z_dynamic = sample
    pred, trace = model_forward(model, lookback, z_static, z_dynamic)
    _, upstream = mse_loss(pred, target)
    analytic = model_backward(model, trace, upstream)

    errors = {}
    entry_error = 0.0
    for name, param in model.parameters().items():
        numeric = np.zeros_like(param)
        flat = param.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus = _sample_loss(model, lookback, target, z_static, z_dynamic)
            flat[i] = original - eps
            minus = _sample_loss(model, lookback, target, z_static, z_dynamic)
            flat[i] = original
            numeric.reshape(-1)[i] = (plus - minus) / (2.0 * eps)
        scale = max(np.max(np.abs(analytic[name])), np.max(np.abs(numeric)), 1e-8)
        errors[name] = float(np.max(np.abs(analytic[name] - numeric)) / scale)
        a = analytic[name]
        live = np.abs(a) > ENTRY_FLOOR
        if np.any(live):
            ratio = np.abs(a - numeric)[live] / (np.abs(a[live]) + 1e-8)
            entry_error = max(entry_error, float(np.max(ratio)))

    worst = max(errors, key=errors.get)
    return GradCheckReport(
        max_error=errors[worst], worst_param=worst, errors=errors, max_entry_error=entry_error
    )
