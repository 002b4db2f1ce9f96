"""Tests for the efficiency report."""

import unittest

import numpy as np

from lemole.bench import bench, bench_random_batch
from lemole.data import SourceData, SplitSpec, chrono_split
from lemole.model import count_params_formula
from lemole.providers import EmbeddingCache, HashEmbeddingProvider
from lemole.synthetic import sinusoid_frame, synthetic_meta
from lemole.training import Conditioner, TrainConfig, train


class TestBench(unittest.TestCase):
    """Test cases for bench."""

    def setUp(self):
        frame = sinusoid_frame(rows=200)
        sources = [SourceData(synthetic_meta(), *chrono_split(frame, SplitSpec(0.6, 0.2, 0.2)))]
        self.encoder = EmbeddingCache(HashEmbeddingProvider(d_llm=8))
        config = TrainConfig(T=16, H=4, M=2, epochs=1, seed=0)
        self.model, _ = train(config, sources, self.encoder)
        self.conditioner = Conditioner(self.encoder, [synthetic_meta()])

    def test_report(self):
        before = {k: v.copy() for k, v in self.model.parameters().items()}
        batch = bench_random_batch(self.model, batch_size=8)
        result = bench(self.model, batch, self.conditioner, reps=10)
        self.assertEqual(
            result["params"],
            count_params_formula(self.model.hyper, self.model.bank.window_lengths),
        )
        self.assertEqual(result["batch_size"], 8)
        self.assertGreater(result["train_ms_per_step"], 0.0)
        self.assertGreater(result["infer_ms_per_window"], 0.0)
        for name, value in self.model.parameters().items():
            np.testing.assert_array_equal(value, before[name])

    def test_rejects_few_reps(self):
        batch = bench_random_batch(self.model, batch_size=2)
        with self.assertRaises(ValueError):
            bench(self.model, batch, self.conditioner, reps=3)


if __name__ == "__main__":
    unittest.main()
