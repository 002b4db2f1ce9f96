"""Static and dynamic prompt rendering plus the offline hash encoder."""

import re
import string
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyText, EmptyTimestamps

STATIC = "static"
DYNAMIC = "dynamic"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_TOKEN_RE = re.compile(
    r"[^\s{p}]+|[{p}]".format(p=re.escape(string.punctuation))
)


def fnv1a_64(text: str) -> int:
    """FNV-1a 64-bit hash of the UTF-8 encoding."""
    value = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        value ^= byte
        value = (value * _FNV_PRIME) & _MASK64
    return value


def prompt_hash(text: str) -> str:
    return f"{fnv1a_64(text):016x}"


@dataclass(frozen=True)
class PromptText:
    text: str
    kind: str
    token_hint: Optional[int] = None

    def __post_init__(self):
        if not self.text:
            raise EmptyText("prompt text must not be empty")
        if self.kind not in (STATIC, DYNAMIC):
            raise ValueError(f"prompt kind must be static or dynamic, got '{self.kind}'")


@dataclass(frozen=True)
class DatasetMeta:
    """What the static prompt says about a dataset."""

    name: str
    description: str
    channels: Tuple[Tuple[str, str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.description.strip():
            raise ValueError("dataset description must not be empty")
        object.__setattr__(self, "channels", tuple(tuple(c) for c in self.channels))

    def for_channels(self, names: Sequence[str]) -> "DatasetMeta":
        """Restrict channel descriptions to ``names``, keeping unknown names bare."""
        known = dict(self.channels)
        return DatasetMeta(
            self.name,
            self.description,
            tuple((n, known.get(n, n)) for n in names),
        )


_ETT_CHANNELS = (
    ("HUFL", "high useful load"),
    ("HULL", "high useless load"),
    ("MUFL", "middle useful load"),
    ("MULL", "middle useless load"),
    ("LUFL", "low useful load"),
    ("LULL", "low useless load"),
    ("OT", "oil temperature of the transformer"),
)

DATASET_PRESETS: Dict[str, DatasetMeta] = {
    "ETTh1": DatasetMeta(
        "ETTh1",
        "Electricity transformer temperature data recorded hourly from July 2016 "
        "to July 2018 at an electricity transformer station in China, collected "
        "by load and oil temperature sensors.",
        _ETT_CHANNELS,
    ),
    "ETTm1": DatasetMeta(
        "ETTm1",
        "Electricity transformer temperature data recorded every 15 minutes from "
        "July 2016 to July 2018 at an electricity transformer station in China, "
        "collected by load and oil temperature sensors.",
        _ETT_CHANNELS,
    ),
    "Electricity": DatasetMeta(
        "Electricity",
        "Hourly electricity consumption in kWh of 321 clients from 2012 to 2014, "
        "collected from client meters by a Portuguese utility.",
    ),
    "Traffic": DatasetMeta(
        "Traffic",
        "Hourly road occupancy rates between 0 and 1 measured by sensors on San "
        "Francisco Bay area freeways from 2015 to 2016.",
    ),
    "synthetic": DatasetMeta(
        "synthetic",
        "Synthetic daily-periodic signal with a slow linear trend and Gaussian "
        "noise, generated by a seeded simulator.",
        (("value", "simulated sensor reading"),),
    ),
}


def tokenize(text: str) -> List[str]:
    """Lowercase, split on whitespace and ASCII punctuation, keep punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


def render_static_prompt(meta: DatasetMeta) -> PromptText:
    variables = "; ".join(f"{name}: {meaning}" for name, meaning in meta.channels)
    text = f"Dataset: {meta.name}. {meta.description} Variables: {variables}."
    return PromptText(text=text, kind=STATIC, token_hint=len(tokenize(text)))


def _iso(epoch_seconds: int) -> str:
    return datetime.fromtimestamp(int(epoch_seconds), tz=timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%SZ"
    )


def render_dynamic_prompt(lookback_timestamps: Sequence[int], freq_seconds: int) -> PromptText:
    """Summarize a lookback span; the token count is the same for every window."""
    if len(lookback_timestamps) == 0:
        raise EmptyTimestamps("dynamic prompt needs at least one timestamp")
    start = int(lookback_timestamps[0])
    end = int(lookback_timestamps[-1])
    text = (
        f"The input series spans {_iso(start)} to {_iso(end)}, sampled every "
        f"{int(freq_seconds)} seconds; forecast begins {_iso(end + int(freq_seconds))}."
    )
    return PromptText(text=text, kind=DYNAMIC, token_hint=len(tokenize(text)))


@lru_cache(maxsize=65536)
def token_vector(token: str, d_llm: int, seed: int) -> np.ndarray:
    """Read-only unit vector drawn from a Philox stream keyed by (seed, token hash)."""
    key = ((int(seed) & _MASK64) << 64) | fnv1a_64(token)
    generator = np.random.Generator(np.random.Philox(key=key))
    vector = generator.random(d_llm) * 2.0 - 1.0
    vector /= np.sqrt(np.dot(vector, vector))
    vector.flags.writeable = False
    return vector


def hash_encoder(text: str, d_llm: int, seed: int = 0) -> np.ndarray:
    """Deterministic offline stand-in for a frozen text encoder (L x d_llm)."""
    if d_llm < 1:
        raise ValueError(f"d_llm must be >= 1, got {d_llm}")
    tokens = tokenize(text)
    if not tokens:
        raise EmptyText("text has no tokens")
    return np.stack([token_vector(t, d_llm, seed) for t in tokens])
