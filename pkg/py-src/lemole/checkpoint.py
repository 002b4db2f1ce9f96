"""Versioned JSON checkpoints.

Floats are written with ``repr`` precision so a save/load cycle is exact,
and keys are sorted so identical models give identical bytes.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .data import ChannelStats
from .errors import MissingArtifact, ShapeMismatch
from .model import LemoleModel, ModelHyper, build_model
from .prompts import DatasetMeta

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    model: LemoleModel
    stats: ChannelStats
    channel_names: List[str]
    sources: List[DatasetMeta]
    provider_id: str = ""
    cutoff_bins: Optional[int] = None


def _meta_to_dict(meta: DatasetMeta) -> Dict[str, Any]:
    return {
        "name": meta.name,
        "description": meta.description,
        "channels": [list(c) for c in meta.channels],
    }


def checkpoint_dict(ckpt: Checkpoint) -> Dict[str, Any]:
    model = ckpt.model
    return {
        "version": CHECKPOINT_VERSION,
        "domain": model.domain,
        "conditioning_mode": model.conditioning_mode,
        "branches": list(model.branches),
        "window_lengths": model.bank.window_lengths,
        "cutoff_bins": ckpt.cutoff_bins,
        "hyper": model.hyper.to_dict(),
        "stats": {
            "channel_names": list(ckpt.channel_names),
            "mean": ckpt.stats.mean.tolist(),
            "std": ckpt.stats.std.tolist(),
        },
        "sources": [_meta_to_dict(m) for m in ckpt.sources],
        "provider_id": ckpt.provider_id,
        "params": {
            name: {"shape": list(value.shape), "data": value.ravel().tolist()}
            for name, value in model.parameters().items()
        },
    }


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(checkpoint_dict(ckpt), sort_keys=True, indent=1)
    path.write_text(text + "\n", encoding="utf-8")
    logger.debug(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Rebuild a model from a checkpoint file.

    Raises:
        MissingArtifact: If the file does not exist or is not a checkpoint
        ShapeMismatch: If a stored tensor disagrees with the stored hyper-parameters
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"checkpoint not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise MissingArtifact(f"{path} is not a checkpoint: {e}") from e
    if data.get("version") != CHECKPOINT_VERSION:
        raise MissingArtifact(f"{path}: unsupported checkpoint version {data.get('version')!r}")

    hyper = ModelHyper(**data["hyper"])
    model = build_model(
        np.random.default_rng(0),
        hyper,
        data["window_lengths"],
        domain=data["domain"],
        conditioning_mode=data["conditioning_mode"],
        branches=data["branches"],
        cutoff_bins=data.get("cutoff_bins"),
    )
    params = model.parameters()
    stored = data["params"]
    if set(stored) != set(params):
        raise ShapeMismatch(f"{path}: parameter names do not match the architecture")
    for name, target in params.items():
        entry = stored[name]
        if tuple(entry["shape"]) != target.shape:
            raise ShapeMismatch(
                f"{path}: {name} has shape {tuple(entry['shape'])}, expected {target.shape}"
            )
        target[...] = np.asarray(entry["data"], dtype=np.float64).reshape(target.shape)

    stats = data["stats"]
    return Checkpoint(
        model=model,
        stats=ChannelStats(mean=np.asarray(stats["mean"]), std=np.asarray(stats["std"])),
        channel_names=list(stats["channel_names"]),
        sources=[
            DatasetMeta(s["name"], s["description"], tuple(tuple(c) for c in s["channels"]))
            for s in data.get("sources", [])
        ],
        provider_id=data.get("provider_id", ""),
        cutoff_bins=data.get("cutoff_bins"),
    )
