"""Tests for embedding providers and the embedding cache."""

import json
import shutil
import tempfile
import threading
import unittest
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path
from unittest.mock import patch

import numpy as np
import requests

from lemole.config import Config
from lemole.errors import (
    CacheMiss,
    ConfigError,
    EmbeddingShapeInvalid,
    HashMismatch,
    MalformedResponse,
    ProviderUnavailable,
)
from lemole.prompts import DATASET_PRESETS, PromptText, prompt_hash, render_static_prompt
from lemole.providers import (
    MANIFEST_NAME,
    EmbeddingCache,
    FileEmbeddingProvider,
    HashEmbeddingProvider,
    PromptEmbedding,
    RemoteEmbeddingProvider,
    build_provider,
    embed,
    file_provider_load,
    write_embedding_store,
)

EMBEDDING = np.arange(2 * 768, dtype=float).reshape(2, 768) / 1000.0


class StubHandler(BaseHTTPRequestHandler):
    """Embedding service stub: fails ``failures`` times with 503, then answers."""

    failures = 0
    requests_seen = 0
    payload = {"embedding": EMBEDDING.tolist()}

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        json.loads(self.rfile.read(length))
        cls = type(self)
        cls.requests_seen += 1
        if cls.requests_seen <= cls.failures:
            self.send_response(503)
            self.end_headers()
            return
        body = json.dumps(cls.payload).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, format, *args):
        pass


class TestRemoteProvider(unittest.TestCase):
    """Test cases for the HTTP embedding provider."""

    def setUp(self):
        StubHandler.failures = 0
        StubHandler.requests_seen = 0
        StubHandler.payload = {"embedding": EMBEDDING.tolist()}
        self.server = HTTPServer(("127.0.0.1", 0), StubHandler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        self.endpoint = f"http://127.0.0.1:{self.server.server_address[1]}/embed"
        self.session = requests.Session()
        self.session.trust_env = False

    def tearDown(self):
        self.server.shutdown()
        self.server.server_close()
        self.session.close()

    def provider(self, **kwargs) -> RemoteEmbeddingProvider:
        return RemoteEmbeddingProvider(self.endpoint, session=self.session, **kwargs)

    def test_round_trip(self):
        matrix = self.provider().fetch("hello")
        self.assertEqual(matrix.shape, (2, 768))
        np.testing.assert_array_equal(matrix, EMBEDDING)

    def test_results_are_cached(self):
        provider = self.provider()
        provider.encode("hello")
        provider.encode("hello")
        self.assertEqual(StubHandler.requests_seen, 1)

    @patch("lemole.providers.time.sleep")
    def test_retries_on_503(self, mock_sleep):
        StubHandler.failures = 3
        matrix = self.provider(retries=3).fetch("hello")
        np.testing.assert_array_equal(matrix, EMBEDDING)
        self.assertEqual(StubHandler.requests_seen, 4)
        delays = [c.args[0] for c in mock_sleep.call_args_list]
        np.testing.assert_allclose(delays, [0.1, 0.2, 0.4])

    @patch("lemole.providers.time.sleep")
    def test_gives_up_after_retries(self, mock_sleep):
        StubHandler.failures = 10
        with self.assertRaises(ProviderUnavailable) as ctx:
            self.provider(retries=3).fetch("hello")
        self.assertEqual(ctx.exception.attempts, 4)
        self.assertEqual(StubHandler.requests_seen, 4)

    def test_malformed_payload(self):
        StubHandler.payload = {"vectors": []}
        with self.assertRaises(MalformedResponse):
            self.provider().fetch("hello")

    def test_embed_wraps_matrix(self):
        embedding = embed(self.provider(), PromptText("hello", "static"))
        self.assertEqual(embedding.tokens, 2)
        self.assertEqual(embedding.dim, 768)
        self.assertEqual(embedding.prompt_hash, prompt_hash("hello"))
        self.assertFalse(embedding.matrix.flags.writeable)


class TestFileProvider(unittest.TestCase):
    """Test cases for the precomputed embedding store."""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())
        rng = np.random.default_rng(4)
        # float32-representable so the store is exact
        self.embeddings = {
            "first prompt": rng.standard_normal((3, 16)).astype(np.float32).astype(np.float64),
            "second prompt": rng.standard_normal((5, 16)).astype(np.float32).astype(np.float64),
        }
        write_embedding_store(self.test_dir, self.embeddings)

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_round_trip_is_bit_exact(self):
        provider = file_provider_load(self.test_dir)
        for text, matrix in self.embeddings.items():
            np.testing.assert_array_equal(provider.encode(text), matrix)

    def test_cache_miss(self):
        with self.assertRaises(CacheMiss):
            FileEmbeddingProvider(self.test_dir).encode("unknown prompt")

    def test_hash_mismatch(self):
        manifest_path = self.test_dir / MANIFEST_NAME
        manifest = json.loads(manifest_path.read_text())
        key = prompt_hash("first prompt")
        manifest["entries"][key]["text"] = "tampered"
        manifest_path.write_text(json.dumps(manifest))
        with self.assertRaises(HashMismatch):
            FileEmbeddingProvider(self.test_dir).encode("first prompt")

    def test_bad_byte_length(self):
        manifest_path = self.test_dir / MANIFEST_NAME
        manifest = json.loads(manifest_path.read_text())
        manifest["entries"][prompt_hash("second prompt")]["byte_length"] = 12
        manifest_path.write_text(json.dumps(manifest))
        with self.assertRaises(EmbeddingShapeInvalid):
            FileEmbeddingProvider(self.test_dir).encode("second prompt")

    def test_missing_store(self):
        with self.assertRaises(ProviderUnavailable):
            FileEmbeddingProvider(self.test_dir / "nowhere")


class TestEmbeddingCache(unittest.TestCase):
    """Test cases for the memoizing cache."""

    def setUp(self):
        self.cache = EmbeddingCache(HashEmbeddingProvider(d_llm=8), capacity=2)
        self.stamps = np.arange(24) * 3600 + 1467331200

    def test_static_is_computed_once(self):
        meta = DATASET_PRESETS["synthetic"]
        first = self.cache.static(meta)
        self.assertIs(self.cache.static(meta), first)
        expected = HashEmbeddingProvider(d_llm=8).encode(render_static_prompt(meta).text)
        np.testing.assert_array_equal(first.matrix, expected)

    def test_dynamic_lru(self):
        self.cache.dynamic(self.stamps, 3600)
        self.cache.dynamic(self.stamps, 3600)
        self.assertEqual((self.cache.hits, self.cache.misses), (1, 1))
        self.cache.dynamic(self.stamps + 3600, 3600)
        self.cache.dynamic(self.stamps + 7200, 3600)
        self.cache.dynamic(self.stamps, 3600)
        self.assertEqual(self.cache.misses, 4)

    def test_dynamic_batch(self):
        batch = np.stack([self.stamps, self.stamps + 3600, self.stamps])
        stacked = self.cache.dynamic_batch(batch, 3600)
        self.assertEqual(stacked.shape[0], 3)
        self.assertEqual(stacked.shape[2], 8)
        np.testing.assert_array_equal(stacked[0], stacked[2])
        short = self.cache.dynamic_batch(batch, 3600, window_length=6)
        self.assertEqual(short.shape[1], stacked.shape[1])
        self.assertFalse(np.array_equal(short[0], stacked[0]))

    def test_invalid_embedding(self):
        with self.assertRaises(EmbeddingShapeInvalid):
            PromptEmbedding(np.zeros(4), "static", "x", "0")
        with self.assertRaises(EmbeddingShapeInvalid):
            PromptEmbedding(np.full((2, 2), np.nan), "static", "x", "0")


class TestBuildProvider(unittest.TestCase):
    """Test cases for provider selection."""

    def test_hash_provider(self):
        config = Config({"provider": {"d_llm": 32, "seed": 5}})
        provider = build_provider(config)
        self.assertIsInstance(provider, HashEmbeddingProvider)
        self.assertEqual(provider.provider_id, "hash-d32-s5")

    def test_remote_needs_endpoint(self):
        with self.assertRaises(ConfigError):
            build_provider(Config({"provider": {"kind": "remote"}}))

    def test_unknown_kind(self):
        with self.assertRaises(ConfigError):
            build_provider(Config({"provider": {"kind": "gpt"}}))


if __name__ == "__main__":
    unittest.main()
