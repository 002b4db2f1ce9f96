"""Configuration management for LeMoLE runs."""

import copy
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from .errors import ConfigError

ENDPOINT_ENV_VAR = "LEMOLE_EMBED_ENDPOINT"

DEFAULT_CONFIG: Dict[str, Dict[str, Any]] = {
    "dataset": {
        "path": None,
        "timestamp_column": "date",
        "freq_seconds": 3600,
        "channel": "last",
        "preset": "synthetic",
        "name": None,
        "description": None,
        "channel_descriptions": None,
    },
    "synthetic": {
        "rows": 2000,
        "period": 24,
        "trend": 0.0005,
        "noise": 0.1,
        "channels": 1,
        "seed": 7,
        "start": "2016-07-01T00:00:00Z",
    },
    "split": {
        "train": 0.7,
        "val": 0.1,
        "test": 0.2,
    },
    "model": {
        "lookback": 96,
        "horizon": 96,
        "num_experts": 3,
        "window_lengths": None,
        "min_window": 8,
        "expert_domain": "time",
        "conditioning_mode": "aggregate",
        "kernel_size": 3,
        "freq_cutoff_bins": None,
        "branches": ["static", "dynamic"],
    },
    "training": {
        "epochs": 20,
        "batch_size": 32,
        "learning_rate": 1e-3,
        "adam_betas": [0.9, 0.999],
        "adam_eps": 1e-8,
        "early_stop_patience": 5,
        "seed": 2024,
        "few_shot_fraction": 1.0,
        "train_stride": 1,
    },
    "provider": {
        "kind": "hash",
        "d_llm": 768,
        "seed": 0,
        "path": None,
        "endpoint": None,
        "retries": 3,
        "timeout": 10.0,
        "cache_size": 1024,
    },
    "eval": {
        "stride": 1,
        "raw_metrics": False,
        "horizons": [96, 192, 336, 720],
        "m_values": [1, 2, 3, 4, 5],
        "threads": 1,
        "bench_reps": 20,
    },
    "output": {
        "dir": "runs",
        "history_timings": False,
        "log_file": None,
    },
}


def _unknown_keys(text: str) -> List[str]:
    """Walk the YAML node tree and report unknown sections/keys with lines."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as e:
        return [f"invalid YAML: {e}"]
    if root is None:
        return []
    if not isinstance(root, yaml.MappingNode):
        return [f"line {root.start_mark.line + 1}: top level must be a mapping of sections"]

    errors = []
    for key_node, value_node in root.value:
        section = key_node.value
        line = key_node.start_mark.line + 1
        if section not in DEFAULT_CONFIG:
            errors.append(f"line {line}: unknown section '{section}'")
            continue
        if not isinstance(value_node, yaml.MappingNode):
            if isinstance(value_node, yaml.ScalarNode) and value_node.value in ("", "null", "~"):
                continue
            errors.append(f"line {line}: section '{section}' must be a mapping")
            continue
        for inner_key, _ in value_node.value:
            if inner_key.value not in DEFAULT_CONFIG[section]:
                errors.append(
                    f"line {inner_key.start_mark.line + 1}: unknown key "
                    f"'{section}.{inner_key.value}'"
                )
    return errors


class Config:
    """Configuration management for LeMoLE.

    Keys are addressed as ``"section.key"``; values not set explicitly fall
    back to ``DEFAULT_CONFIG``.
    """

    def __init__(self, values: Optional[Dict[str, Dict[str, Any]]] = None):
        self.default_config = copy.deepcopy(DEFAULT_CONFIG)
        self.config: Dict[str, Dict[str, Any]] = {}
        self.config_file: Optional[Path] = None
        if values:
            self.update(values)

    def load(self, config_path: str) -> None:
        """Load configuration from a YAML file.

        Args:
            config_path: Path to configuration file

        Raises:
            ConfigError: If the file is missing, malformed or has unknown keys
        """
        self.config_file = Path(config_path)
        if not self.config_file.exists():
            raise ConfigError([f"config file does not exist: {self.config_file}"])

        text = self.config_file.read_text(encoding="utf-8")
        errors = _unknown_keys(text)
        if errors:
            raise ConfigError(errors)

        data = yaml.safe_load(text) or {}
        self.config = {}
        for section, values in data.items():
            self.config[section] = dict(values or {})
        self.apply_env_overrides()

    def apply_env_overrides(self) -> None:
        endpoint = os.environ.get(ENDPOINT_ENV_VAR)
        if endpoint:
            self.set("provider.endpoint", endpoint)

    def save(self, path: str) -> None:
        """Write the resolved configuration (defaults merged) as YAML."""
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as f:
            yaml.safe_dump(self.snapshot(), f, sort_keys=True)

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value.

        Args:
            key: Configuration key as ``section.name``
            default: Default value if key not found

        Returns:
            Configuration value
        """
        section, _, name = key.partition(".")
        if name in self.config.get(section, {}):
            return self.config[section][name]
        return self.default_config.get(section, {}).get(name, default)

    def set(self, key: str, value: Any) -> None:
        """Set configuration value.

        Args:
            key: Configuration key as ``section.name``
            value: Configuration value
        """
        section, _, name = key.partition(".")
        if section not in self.default_config or name not in self.default_config[section]:
            raise ConfigError([f"unknown key '{key}'"])
        self.config.setdefault(section, {})[name] = value

    def update(self, config_dict: Dict[str, Dict[str, Any]]) -> None:
        """Update multiple configuration values.

        Args:
            config_dict: Nested dictionary of section -> key -> value
        """
        for section, values in config_dict.items():
            for name, value in values.items():
                self.set(f"{section}.{name}", value)

    def reset(self) -> None:
        """Reset configuration to defaults."""
        self.config = {}

    def snapshot(self) -> Dict[str, Dict[str, Any]]:
        """Fully resolved configuration as a nested dictionary."""
        resolved = copy.deepcopy(self.default_config)
        for section, values in self.config.items():
            resolved[section].update(copy.deepcopy(values))
        return resolved

    def digest(self) -> str:
        """Short stable hash of the resolved configuration."""
        text = json.dumps(self.snapshot(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
