"""Tests for the assembled LeMoLE network."""

import unittest

import numpy as np

from lemole.conditioning import Conv1d
from lemole.errors import ShapeMismatch
from lemole.experts import linear_forward
from lemole.model import (
    AGGREGATE,
    PER_EXPERT,
    ModelHyper,
    build_model,
    count_params,
    count_params_formula,
    model_backward,
    model_forward,
)


def neutral_generators(model):
    """gamma == 1 and beta == 0 for every embedding."""
    for gen in model.generators.values():
        gen.channel_map[...] = 0.0
        gen.channel_bias[...] = 0.0
        gen.time_map[...] = 0.0
        gen.time_bias[...] = 1.0 if gen.target == "gamma" else 0.0


class TestModel(unittest.TestCase):
    """Test cases for model construction and the forward pass."""

    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.hyper = ModelHyper(T=8, H=4, C=2, M=3, d_llm=6, L_S=5, L_D=3)

    def embeddings(self, batch=None):
        lead = () if batch is None else (batch,)
        z_static = self.rng.standard_normal((self.hyper.L_S, self.hyper.d_llm))
        z_dynamic = self.rng.standard_normal(lead + (self.hyper.L_D, self.hyper.d_llm))
        return z_static, z_dynamic

    def test_identity_reduction(self):
        hyper = ModelHyper(T=16, H=4, C=1, M=1, d_llm=6, L_S=5, L_D=3)
        model = build_model(self.rng, hyper, [16])
        neutral_generators(model)
        model.agg_conv = Conv1d.identity(1)
        model.final_conv = Conv1d.identity(3)
        lookback = self.rng.standard_normal((100, 16, 1))
        z_static, _ = self.embeddings()
        z_dynamic = self.rng.standard_normal((100, 3, 6))
        pred, _ = model_forward(model, lookback, z_static, z_dynamic)
        expected = linear_forward(model.bank.experts[0], lookback)
        self.assertLess(np.max(np.abs(pred - expected)), 1e-10)

    def test_parameter_count_example(self):
        hyper = ModelHyper(T=4, H=2, C=1, M=1, d_llm=4, L_S=2, L_D=2)
        model = build_model(self.rng, hyper, [4])
        self.assertEqual(count_params(model), 68)
        self.assertEqual(count_params_formula(hyper, [4]), 68)

    def test_count_matches_formula(self):
        cases = [
            ("time", AGGREGATE, ("static", "dynamic"), None),
            ("frequency", AGGREGATE, ("dynamic",), None),
            ("frequency", PER_EXPERT, ("static", "dynamic"), 3),
            ("time", PER_EXPERT, (), None),
        ]
        for domain, mode, branches, cutoff in cases:
            model = build_model(self.rng, self.hyper, [8, 4, 2], domain, mode, branches, cutoff)
            self.assertEqual(
                count_params(model),
                count_params_formula(self.hyper, [8, 4, 2], domain, mode, branches, cutoff),
                msg=f"{domain}/{mode}/{branches}",
            )

    def test_default_scale_under_five_million(self):
        hyper = ModelHyper(T=96, H=96, C=1, M=3, d_llm=768, L_S=64, L_D=64)
        total = count_params_formula(hyper, [96, 48, 24])
        self.assertLess(total, 5_000_000)

    def test_parameter_order(self):
        model = build_model(self.rng, self.hyper, [8, 4, 2])
        names = list(model.parameters())
        self.assertEqual(names[0], "experts.0.weight")
        self.assertEqual(names[-1], "final_conv.bias")
        self.assertLess(names.index("agg_conv.kernels"), names.index("film.dynamic.beta.channel_map"))
        self.assertLess(names.index("film.dynamic.gamma.time_bias"), names.index("film.static.beta.channel_map"))

    def test_build_is_seeded(self):
        a = build_model(np.random.default_rng(11), self.hyper, [8, 4, 2])
        b = build_model(np.random.default_rng(11), self.hyper, [8, 4, 2])
        for name, value in a.parameters().items():
            np.testing.assert_array_equal(value, b.parameters()[name])

    def test_dropped_branches_shrink_fusion(self):
        model = build_model(self.rng, self.hyper, [8, 4, 2], branches=("dynamic",))
        self.assertEqual(model.fusion_channels, 2)
        self.assertEqual(set(model.generators), {"dynamic.gamma", "dynamic.beta"})
        lookback = self.rng.standard_normal((3, 8, 2))
        _, z_dynamic = self.embeddings(3)
        pred, _ = model_forward(model, lookback, None, z_dynamic)
        self.assertEqual(pred.shape, (3, 4, 2))
        with self.assertRaises(ShapeMismatch):
            model_forward(model, lookback, None, None)

    def test_neutral_dynamic_branch_ignores_embedding(self):
        model = build_model(self.rng, self.hyper, [8, 4, 2])
        for key in ("dynamic.gamma", "dynamic.beta"):
            gen = model.generators[key]
            gen.channel_map[...] = 0.0
            gen.time_map[...] = 0.0
        lookback = self.rng.standard_normal((3, 8, 2))
        z_static, z_dynamic = self.embeddings(3)
        first, _ = model_forward(model, lookback, z_static, z_dynamic)
        second, _ = model_forward(model, lookback, z_static, np.zeros_like(z_dynamic))
        np.testing.assert_array_equal(first, second)

    def test_per_expert_dynamic_embeddings(self):
        model = build_model(self.rng, self.hyper, [8, 4, 2], conditioning_mode=PER_EXPERT)
        self.assertIsNone(model.agg_conv)
        self.assertEqual(model.fusion_channels, 3)
        lookback = self.rng.standard_normal((2, 8, 2))
        z_static, _ = self.embeddings()
        per_expert = [self.embeddings(2)[1] for _ in range(3)]
        pred, trace = model_forward(model, lookback, z_static, per_expert)
        self.assertEqual(pred.shape, (2, 4, 2))
        self.assertEqual(len(trace.film["dynamic"]), 3)
        with self.assertRaises(ShapeMismatch):
            model_forward(model, lookback, z_static, per_expert[:2])

    def test_single_window_forward(self):
        model = build_model(self.rng, self.hyper, [8, 4, 2])
        lookback = self.rng.standard_normal((8, 2))
        z_static, z_dynamic = self.embeddings()
        pred, _ = model_forward(model, lookback, z_static, z_dynamic)
        batched, _ = model_forward(model, lookback[None], z_static, z_dynamic[None])
        self.assertEqual(pred.shape, (4, 2))
        np.testing.assert_allclose(pred, batched[0], atol=1e-12)

    def test_batched_backward_sums_window_gradients(self):
        for mode in (AGGREGATE, PER_EXPERT):
            model = build_model(self.rng, self.hyper, [8, 4, 2], conditioning_mode=mode)
            lookback = self.rng.standard_normal((4, 8, 2))
            upstream = self.rng.standard_normal((4, 4, 2))
            z_static, z_dynamic = self.embeddings(4)
            _, trace = model_forward(model, lookback, z_static, z_dynamic)
            grads = model_backward(model, trace, upstream)
            totals = {name: np.zeros_like(value) for name, value in grads.items()}
            for i in range(4):
                _, trace_i = model_forward(model, lookback[i], z_static, z_dynamic[i])
                for name, value in model_backward(model, trace_i, upstream[i]).items():
                    totals[name] += value
            for name, value in grads.items():
                np.testing.assert_allclose(value, totals[name], atol=1e-10, err_msg=f"{mode} {name}")

    def test_lookback_shape_check(self):
        model = build_model(self.rng, self.hyper, [8, 4, 2])
        z_static, z_dynamic = self.embeddings()
        with self.assertRaises(ShapeMismatch):
            model_forward(model, np.zeros((7, 2)), z_static, z_dynamic)


if __name__ == "__main__":
    unittest.main()
