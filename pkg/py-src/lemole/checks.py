"""Pre-run validation of a resolved configuration."""

import logging
import os
from pathlib import Path
from typing import List, Tuple

from .config import Config
from .errors import ConfigError, LemoleError
from .prompts import DATASET_PRESETS
from .training import TrainConfig

logger = logging.getLogger(__name__)

PROVIDER_KINDS = ("hash", "file", "remote")


def check_dataset(config: Config) -> Tuple[bool, str]:
    """Check that the dataset file exists, or that the synthetic set is selected.

    Returns:
        Tuple[bool, str]: (success, message)
    """
    path = config.get("dataset.path")
    preset = config.get("dataset.preset")
    if path is None:
        if preset != "synthetic":
            return False, f"dataset.path is required for preset '{preset}'"
        return True, "✓ Using the bundled synthetic dataset"
    if not Path(path).is_file():
        return False, f"Dataset file does not exist: {path}"
    if preset is not None and preset not in DATASET_PRESETS and not config.get("dataset.description"):
        return False, f"Unknown preset '{preset}' and no dataset.description given"
    return True, f"✓ Dataset file {path} found"


def check_split(config: Config) -> Tuple[bool, str]:
    fractions = [config.get(f"split.{k}") for k in ("train", "val", "test")]
    try:
        fractions = [float(f) for f in fractions]
    except (TypeError, ValueError):
        return False, f"Split fractions must be numbers, got {fractions}"
    if any(not 0.0 < f < 1.0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        return False, f"Split fractions must lie in (0, 1) and sum to 1, got {fractions}"
    return True, f"✓ Split {fractions[0]:g}/{fractions[1]:g}/{fractions[2]:g}"


def check_model(config: Config) -> Tuple[bool, str]:
    """Check hyper-parameters and the window schedule against the lookback."""
    try:
        train_config = TrainConfig.from_config(config)
        lengths = train_config.resolved_window_lengths
    except ConfigError as e:
        return False, "; ".join(e.messages)
    except (LemoleError, TypeError, ValueError) as e:
        return False, f"Invalid model settings: {e}"
    return True, f"✓ {train_config.M} {train_config.expert_domain}-domain experts, windows {lengths}"


def check_provider(config: Config) -> Tuple[bool, str]:
    kind = config.get("provider.kind")
    if kind not in PROVIDER_KINDS:
        return False, f"provider.kind must be one of {list(PROVIDER_KINDS)}, got '{kind}'"
    if int(config.get("provider.d_llm")) < 1:
        return False, "provider.d_llm must be >= 1"
    if kind == "file":
        path = config.get("provider.path")
        if not path or not (Path(path) / "manifest.json").is_file():
            return False, f"Embedding store not found: {path}"
    if kind == "remote" and not config.get("provider.endpoint"):
        return False, "provider.endpoint (or LEMOLE_EMBED_ENDPOINT) is required for remote"
    return True, f"✓ Embedding provider '{kind}' configured"


def check_output_dir(config: Config) -> Tuple[bool, str]:
    out = Path(config.get("output.dir"))
    parent = out if out.exists() else out.parent
    while not parent.exists() and parent != parent.parent:
        parent = parent.parent
    if not os.access(parent, os.W_OK):
        return False, f"Output directory is not writable: {out}"
    return True, f"✓ Output directory {out} is writable"


def run_all_checks(config: Config) -> Tuple[bool, List[str]]:
    """Run all configuration checks.

    Args:
        config: Resolved configuration

    Returns:
        Tuple[bool, List[str]]: (success, messages)
    """
    checks = [
        check_dataset(config),
        check_split(config),
        check_model(config),
        check_provider(config),
        check_output_dir(config),
    ]
    success = all(check[0] for check in checks)
    messages = [check[1] for check in checks]
    for ok, message in checks:
        if not ok:
            logger.error(message)
    return success, messages
