"""Parameter counts and wall-clock timing of training steps and inference."""

import copy
import logging
import statistics
import time
from typing import Callable, Dict, Optional, Union

import numpy as np

from .data import WindowArrays, WindowSet
from .model import LemoleModel, count_params, model_backward, model_forward
from .training import AdamState, Conditioner, TrainConfig, adam_step, mse_loss

logger = logging.getLogger(__name__)

WARMUP = 3
MIN_REPS = 10


def _median_ms(fn: Callable[[], None], reps: int) -> float:
    for _ in range(WARMUP):
        fn()
    samples = []
    for _ in range(reps):
        started = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - started) * 1000.0)
    return float(statistics.median(samples))


def bench(model: LemoleModel, batch: WindowSet, conditioner: Conditioner,
          reps: int = 20, config: Optional[TrainConfig] = None) -> Dict[str, Union[int, float]]:
    """Median timings over ``reps`` runs after warm-up.

    Embeddings are looked up once beforehand; the timed training step works
    on a copy so ``model`` is left untouched.
    """
    if reps < MIN_REPS:
        raise ValueError(f"reps must be >= {MIN_REPS}, got {reps}")
    config = config or TrainConfig(T=model.hyper.T, H=model.hyper.H, M=model.hyper.M)
    z_static, z_dynamic = conditioner.inputs(model, batch)
    lookback = batch.arrays.lookback
    target = batch.arrays.target

    scratch = copy.deepcopy(model)
    params = scratch.parameters()
    state = AdamState()

    def train_step():
        pred, trace = model_forward(scratch, lookback, z_static, z_dynamic)
        _, grad = mse_loss(pred, target)
        adam_step(state, params, model_backward(scratch, trace, grad), config)

    def infer():
        model_forward(model, lookback, z_static, z_dynamic)

    result = {
        "params": count_params(model),
        "batch_size": len(batch),
        "train_ms_per_step": _median_ms(train_step, reps),
        "infer_ms_per_window": _median_ms(infer, reps) / max(1, len(batch)),
    }
    logger.info(
        f"{result['params']} params, {result['train_ms_per_step']:.3f} ms/step, "
        f"{result['infer_ms_per_window']:.4f} ms/window"
    )
    return result


def bench_random_batch(model: LemoleModel, batch_size: int, seed: int = 0,
                       freq_seconds: int = 3600) -> WindowSet:
    """Synthetic batch with the model's shapes, for benchmarking without data."""
    rng = np.random.default_rng(seed)
    h = model.hyper
    start = 1467331200  # 2016-07-01T00:00:00Z
    offsets = np.arange(batch_size)[:, None] * freq_seconds
    stamps = start + offsets + np.arange(h.T + h.H)[None, :] * freq_seconds
    arrays = WindowArrays(
        lookback=rng.standard_normal((batch_size, h.T, h.C)),
        target=rng.standard_normal((batch_size, h.H, h.C)),
        lookback_timestamps=stamps[:, :h.T],
        target_timestamps=stamps[:, h.T:],
        freq_seconds=freq_seconds,
    )
    return WindowSet(arrays, np.zeros(batch_size, dtype=np.int64))
