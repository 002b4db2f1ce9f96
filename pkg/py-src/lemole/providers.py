"""Embedding providers: offline hash encoder, precomputed file store, HTTP service."""

import json
import logging
import threading
import time
from abc import ABC, abstractmethod
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Union

import numpy as np
import requests

from .config import Config
from .errors import (
    CacheMiss,
    ConfigError,
    EmbeddingShapeInvalid,
    HashMismatch,
    MalformedResponse,
    ProviderUnavailable,
)
from .prompts import (
    DatasetMeta,
    PromptText,
    hash_encoder,
    prompt_hash,
    render_dynamic_prompt,
    render_static_prompt,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
BLOB_NAME = "embeddings.bin"
STORE_VERSION = 1


@dataclass(frozen=True)
class PromptEmbedding:
    """Frozen L x d_llm embedding of one prompt."""

    matrix: np.ndarray
    kind: str
    provider_id: str
    prompt_hash: str

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64, copy=True)
        if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
            raise EmbeddingShapeInvalid(
                f"embedding must be a non-empty L x d matrix, got shape {matrix.shape}"
            )
        if not np.all(np.isfinite(matrix)):
            raise EmbeddingShapeInvalid("embedding contains NaN or Inf")
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)

    @property
    def tokens(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])


class EmbeddingProvider(ABC):
    """Frozen text encoder: the same text always yields the same matrix."""

    provider_id = "base"

    @abstractmethod
    def encode(self, text: str) -> np.ndarray:
        raise NotImplementedError("Please implement encode method!")


class HashEmbeddingProvider(EmbeddingProvider):
    def __init__(self, d_llm: int = 768, seed: int = 0):
        self.d_llm = int(d_llm)
        self.seed = int(seed)
        self.provider_id = f"hash-d{self.d_llm}-s{self.seed}"

    def encode(self, text: str) -> np.ndarray:
        return hash_encoder(text, self.d_llm, self.seed)


class FileEmbeddingProvider(EmbeddingProvider):
    """Embeddings precomputed offline (manifest + float32 blob)."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        manifest_path = self.path / MANIFEST_NAME
        if not manifest_path.exists():
            raise ProviderUnavailable(f"no embedding manifest at {manifest_path}")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        self.entries: Dict[str, dict] = manifest.get("entries", {})
        self.blob_path = self.path / manifest.get("blob", BLOB_NAME)
        self.provider_id = f"file:{self.path.name}"
        self._blob: Optional[bytes] = None
        self._lock = threading.Lock()

    def _read_blob(self) -> bytes:
        with self._lock:
            if self._blob is None:
                if not self.blob_path.exists():
                    raise ProviderUnavailable(f"embedding blob missing: {self.blob_path}")
                self._blob = self.blob_path.read_bytes()
            return self._blob

    def load(self, key: str) -> np.ndarray:
        if key not in self.entries:
            raise CacheMiss(f"prompt hash {key} not in {self.path / MANIFEST_NAME}")
        entry = self.entries[key]
        stored_text = entry.get("text")
        if stored_text is not None and prompt_hash(stored_text) != key:
            raise HashMismatch(f"manifest entry {key} does not match its stored text")
        rows, cols = int(entry["rows"]), int(entry["cols"])
        offset, length = int(entry["offset"]), int(entry["byte_length"])
        if length != rows * cols * 4:
            raise EmbeddingShapeInvalid(
                f"entry {key}: {length} bytes cannot hold a {rows}x{cols} float32 matrix"
            )
        blob = self._read_blob()
        if offset + length > len(blob):
            raise EmbeddingShapeInvalid(f"entry {key} points past the end of the blob")
        values = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=offset)
        return values.reshape(rows, cols).astype(np.float64)

    def encode(self, text: str) -> np.ndarray:
        return self.load(prompt_hash(text))


class RemoteEmbeddingProvider(EmbeddingProvider):
    """HTTP embedding service: POST {"text"} -> {"embedding": [[...], ...]}.

    5xx responses and connection errors are retried with exponential backoff;
    results are cached in memory by prompt hash.
    """

    def __init__(self, endpoint: str, retries: int = 3, backoff: float = 0.1,
                 timeout: float = 10.0, session: Optional[requests.Session] = None):
        self.endpoint = endpoint
        self.retries = int(retries)
        self.backoff = float(backoff)
        self.timeout = float(timeout)
        self.session = session or requests.Session()
        self.provider_id = f"remote:{endpoint}"
        self._cache: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _post(self, text: str) -> requests.Response:
        attempts = self.retries + 1
        last_error = ""
        for attempt in range(attempts):
            if attempt:
                delay = self.backoff * (2 ** (attempt - 1))
                logger.warning(
                    f"Embedding service failed ({last_error}); retry {attempt}/{self.retries} "
                    f"in {delay * 1000:.0f} ms"
                )
                time.sleep(delay)
            try:
                response = self.session.post(
                    self.endpoint, json={"text": text}, timeout=self.timeout
                )
            except requests.RequestException as e:
                last_error = str(e)
                continue
            if response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
                continue
            return response
        raise ProviderUnavailable(
            f"embedding service {self.endpoint} unavailable after {self.retries} retries: "
            f"{last_error}",
            attempts=attempts,
        )

    def fetch(self, text: str) -> np.ndarray:
        key = prompt_hash(text)
        with self._lock:
            if key in self._cache:
                return self._cache[key]

        response = self._post(text)
        if not 200 <= response.status_code < 300:
            raise MalformedResponse(f"embedding service returned HTTP {response.status_code}")
        try:
            body = response.json()
            matrix = np.asarray(body["embedding"], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as e:
            raise MalformedResponse(f"unexpected embedding payload: {e}") from e
        if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
            raise MalformedResponse(f"embedding must be a non-empty matrix, got {matrix.shape}")

        with self._lock:
            self._cache[key] = matrix
        return matrix

    def encode(self, text: str) -> np.ndarray:
        return self.fetch(text)


def file_provider_load(path: Union[str, Path]) -> FileEmbeddingProvider:
    return FileEmbeddingProvider(path)


def remote_provider_fetch(endpoint: str, text: str, **kwargs) -> PromptEmbedding:
    provider = RemoteEmbeddingProvider(endpoint, **kwargs)
    return embed(provider, PromptText(text=text, kind="static"))


def embed(provider: EmbeddingProvider, prompt: PromptText) -> PromptEmbedding:
    matrix = provider.encode(prompt.text)
    return PromptEmbedding(
        matrix=matrix,
        kind=prompt.kind,
        provider_id=provider.provider_id,
        prompt_hash=prompt_hash(prompt.text),
    )


def write_embedding_store(directory: Union[str, Path],
                          embeddings: Mapping[str, np.ndarray]) -> Path:
    """Write ``{text: matrix}`` as manifest.json + little-endian float32 blob."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = {}
    offset = 0
    with open(directory / BLOB_NAME, "wb") as blob:
        for text, matrix in embeddings.items():
            matrix = np.asarray(matrix)
            if matrix.ndim != 2:
                raise EmbeddingShapeInvalid(f"embedding for {text!r} is not a matrix")
            data = np.ascontiguousarray(matrix, dtype="<f4").tobytes()
            entries[prompt_hash(text)] = {
                "rows": int(matrix.shape[0]),
                "cols": int(matrix.shape[1]),
                "offset": offset,
                "byte_length": len(data),
                "text": text,
            }
            blob.write(data)
            offset += len(data)
    manifest = {"version": STORE_VERSION, "blob": BLOB_NAME, "entries": entries}
    (directory / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )
    logger.info(f"Wrote {len(entries)} embeddings to {directory}")
    return directory


class EmbeddingCache:
    """Memoizes frozen embeddings for training and evaluation.

    The static embedding of each dataset is computed once; dynamic
    embeddings are kept in a bounded LRU keyed by rendered text. Lookups are
    safe from several threads; inserts take the lock.
    """

    def __init__(self, provider: EmbeddingProvider, capacity: int = 1024):
        self.provider = provider
        self.capacity = int(capacity)
        self._static: Dict[str, PromptEmbedding] = {}
        self._dynamic: "OrderedDict[str, PromptEmbedding]" = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def static(self, meta: DatasetMeta) -> PromptEmbedding:
        prompt = render_static_prompt(meta)
        with self._lock:
            cached = self._static.get(prompt.text)
        if cached is not None:
            return cached
        embedding = embed(self.provider, prompt)
        with self._lock:
            self._static.setdefault(prompt.text, embedding)
            return self._static[prompt.text]

    def dynamic(self, lookback_timestamps: Sequence[int], freq_seconds: int) -> PromptEmbedding:
        prompt = render_dynamic_prompt(lookback_timestamps, freq_seconds)
        with self._lock:
            cached = self._dynamic.get(prompt.text)
            if cached is not None:
                self._dynamic.move_to_end(prompt.text)
                self.hits += 1
                return cached
        embedding = embed(self.provider, prompt)
        with self._lock:
            self.misses += 1
            self._dynamic[prompt.text] = embedding
            while len(self._dynamic) > self.capacity:
                self._dynamic.popitem(last=False)
        return embedding

    def dynamic_batch(self, lookback_timestamps: np.ndarray, freq_seconds: int,
                      window_length: Optional[int] = None) -> np.ndarray:
        """Stacked dynamic embeddings (B x L_D x d) for a batch of windows.

        ``window_length`` restricts each prompt to the last ``w`` timestamps.
        """
        rows = []
        for stamps in lookback_timestamps:
            if window_length is not None:
                stamps = stamps[-window_length:]
            rows.append(self.dynamic(stamps, freq_seconds).matrix)
        shapes = {r.shape for r in rows}
        if len(shapes) != 1:
            raise EmbeddingShapeInvalid(
                f"dynamic embeddings differ in shape within a batch: {sorted(shapes)}"
            )
        return np.stack(rows)


def build_provider(config: Config) -> EmbeddingProvider:
    """Provider selected by the ``provider`` section of a config."""
    kind = config.get("provider.kind")
    if kind == "hash":
        return HashEmbeddingProvider(config.get("provider.d_llm"), config.get("provider.seed"))
    if kind == "file":
        return FileEmbeddingProvider(config.get("provider.path"))
    if kind == "remote":
        endpoint = config.get("provider.endpoint")
        if not endpoint:
            raise ConfigError(["provider.endpoint is required for the remote provider"])
        return RemoteEmbeddingProvider(
            endpoint,
            retries=int(config.get("provider.retries")),
            timeout=float(config.get("provider.timeout")),
        )
    raise ConfigError([f"unknown provider kind '{kind}'"])
