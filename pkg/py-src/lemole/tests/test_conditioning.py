"""Tests for FiLM generators and the 1-D convolutions."""

import unittest

import numpy as np

from lemole.conditioning import (
    Conv1d,
    FilmGenerator,
    conv1d_backward,
    conv1d_forward,
    film_apply,
    film_params,
    fold_batch,
    generator_backward,
    generator_forward,
    sum_to_shape,
)
from lemole.errors import ShapeMismatch


class TestFilm(unittest.TestCase):
    """Test cases for FiLM modulation."""

    def setUp(self):
        self.rng = np.random.default_rng(5)

    def test_film_apply_example(self):
        y = np.array([[1.0], [2.0]])
        out = film_apply(np.full((2, 1), 2.0), np.full((2, 1), 1.0), y)
        np.testing.assert_array_equal(out, [[3.0], [5.0]])

    def test_film_apply_shape_check(self):
        with self.assertRaises(ShapeMismatch):
            film_apply(np.ones((3, 1)), np.zeros((2, 1)), np.ones((2, 1)))

    def test_generator_starts_near_identity(self):
        gamma_gen = FilmGenerator.init(self.rng, 8, 2, 5, 4, "static", "gamma")
        beta_gen = FilmGenerator.init(self.rng, 8, 2, 5, 4, "static", "beta")
        z = self.rng.standard_normal((5, 8))
        gamma, beta = film_params(gamma_gen, beta_gen, z)
        self.assertEqual(gamma.shape, (4, 2))
        np.testing.assert_allclose(gamma, 1.0, atol=1e-2)
        np.testing.assert_allclose(beta, 0.0, atol=1e-2)

    def test_generator_rejects_wrong_embedding(self):
        gen = FilmGenerator.init(self.rng, 8, 1, 5, 4, "dynamic", "beta")
        with self.assertRaises(ShapeMismatch):
            generator_forward(gen, np.zeros((6, 8)))
        with self.assertRaises(ValueError):
            FilmGenerator.init(self.rng, 8, 1, 5, 4, "global", "beta")

    def test_generator_backward_with_broadcast_embedding(self):
        gen = FilmGenerator.init(self.rng, 6, 2, 3, 4, "static", "gamma", scale=0.5)
        z = self.rng.standard_normal((3, 6))
        upstream = self.rng.standard_normal((5, 4, 2))

        def loss():
            out, _ = generator_forward(gen, z)
            return float(np.sum(np.broadcast_to(out, upstream.shape) * upstream))

        out, u = generator_forward(gen, z)
        grads = generator_backward(gen, z, u, upstream)
        eps = 1e-6
        for name, param in gen.parameters().items():
            flat = param.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + eps
                plus = loss()
                flat[i] = original - eps
                minus = loss()
                flat[i] = original
                numeric = (plus - minus) / (2 * eps)
                self.assertAlmostEqual(grads[name].reshape(-1)[i], numeric, places=6)

    def test_generator_backward_with_batched_embedding(self):
        gen = FilmGenerator.init(self.rng, 6, 2, 3, 4, "dynamic", "beta", scale=0.5)
        z = self.rng.standard_normal((5, 3, 6))
        upstream = self.rng.standard_normal((5, 4, 2))
        _, u = generator_forward(gen, z)
        grads = generator_backward(gen, z, u, upstream)
        for name in gen.parameters():
            total = 0.0
            for i in range(5):
                _, u_i = generator_forward(gen, z[i])
                total = total + generator_backward(gen, z[i], u_i, upstream[i])[name]
            np.testing.assert_allclose(grads[name], total, atol=1e-12, err_msg=name)

    def test_fold_batch(self):
        self.assertEqual(fold_batch(np.zeros((2, 3, 4, 5)), 2).shape, (6, 4, 5))
        self.assertEqual(fold_batch(np.zeros((4, 5)), 2).shape, (1, 4, 5))

    def test_sum_to_shape(self):
        grad = np.ones((3, 4, 2))
        self.assertEqual(sum_to_shape(grad, (4, 2)).shape, (4, 2))
        np.testing.assert_array_equal(sum_to_shape(grad, (4, 2)), 3.0)
        np.testing.assert_array_equal(sum_to_shape(grad, (3, 1, 2)), 4.0)


class TestConv1d(unittest.TestCase):
    """Test cases for the same-length convolution."""

    def setUp(self):
        self.rng = np.random.default_rng(6)

    def test_box_kernel_example(self):
        conv = Conv1d(kernels=np.ones((1, 1, 3)), bias=np.zeros(1))
        stack = np.array([1.0, 2.0, 3.0]).reshape(1, 3, 1)
        out = conv1d_forward(conv, stack)
        np.testing.assert_array_equal(out[0, :, 0], [3.0, 6.0, 5.0])

    def test_identity_averages_inputs(self):
        conv = Conv1d.identity(in_channels=2)
        stack = self.rng.standard_normal((4, 2, 5, 3))
        out = conv1d_forward(conv, stack)
        np.testing.assert_allclose(out[:, 0], stack.mean(axis=1), atol=1e-12)

    def test_preserves_length_for_every_kernel_size(self):
        stack = self.rng.standard_normal((3, 2, 7, 2))
        for k in (1, 3, 5, 7, 9):
            conv = Conv1d.init(self.rng, in_channels=2, out_channels=1, kernel_size=k)
            self.assertEqual(conv1d_forward(conv, stack).shape, (3, 1, 7, 2), msg=f"k={k}")

    def test_batched_backward_sums_samples(self):
        conv = Conv1d.init(self.rng, in_channels=2, out_channels=1, kernel_size=3, scale=0.5)
        stack = self.rng.standard_normal((2, 3, 2, 6, 1))
        upstream = self.rng.standard_normal((2, 3, 1, 6, 1))
        grads, grad_stack = conv1d_backward(conv, stack, upstream)
        for name in ("kernels", "bias"):
            total = sum(
                conv1d_backward(conv, stack[i, j], upstream[i, j])[0][name]
                for i in range(2) for j in range(3)
            )
            np.testing.assert_allclose(grads[name], total, atol=1e-12, err_msg=name)
        _, single = conv1d_backward(conv, stack[1, 0], upstream[1, 0])
        np.testing.assert_allclose(grad_stack[1, 0], single, atol=1e-12)

    def test_rejects_even_kernel(self):
        with self.assertRaises(ValueError):
            Conv1d(kernels=np.ones((1, 1, 2)), bias=np.zeros(1))
        with self.assertRaises(ValueError):
            Conv1d.init(self.rng, 2, kernel_size=11)

    def test_backward_matches_finite_differences(self):
        conv = Conv1d.init(self.rng, in_channels=3, out_channels=2, kernel_size=5, scale=0.5)
        conv.bias[...] = self.rng.standard_normal(2)
        stack = self.rng.standard_normal((2, 3, 6, 2))
        upstream = self.rng.standard_normal((2, 2, 6, 2))

        def loss():
            return float(np.sum(conv1d_forward(conv, stack) * upstream))

        grads, grad_stack = conv1d_backward(conv, stack, upstream)
        eps = 1e-6
        for name, array in list(conv.parameters().items()) + [("stack", stack)]:
            analytic = grad_stack if name == "stack" else grads[name]
            flat = array.reshape(-1)
            numeric = np.zeros(flat.size)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + eps
                plus = loss()
                flat[i] = original - eps
                minus = loss()
                flat[i] = original
                numeric[i] = (plus - minus) / (2 * eps)
            np.testing.assert_allclose(analytic.reshape(-1), numeric, atol=1e-6, err_msg=name)


if __name__ == "__main__":
    unittest.main()
