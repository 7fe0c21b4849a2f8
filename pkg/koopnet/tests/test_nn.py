import math

import numpy as np

from koopnet.errors import DimensionMismatch, StaleCacheError
from koopnet.nn import DenseNet, OptimizerState, adam_update, mlp_backward, mlp_forward
from koopnet.test import TestCase
from koopnet.utils import rng_stream


def numeric_gradient(fn, array, h=1e-6):
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + h
        upper = fn()
        array[index] = original - h
        lower = fn()
        array[index] = original
        grad[index] = (upper - lower) / (2.0 * h)
    return grad


def relative_error(numeric, analytic):
    return np.max(np.abs(numeric - analytic)) / max(1.0, np.max(np.abs(analytic)))


class DenseNetTests(TestCase):
    def test_he_uniform_bounds(self):
        net = DenseNet.he_uniform([3, 16, 2], rng_stream(0))
        self.assertEqual(net.sizes, [3, 16, 2])
        self.assertLessEqual(np.max(np.abs(net.weights[0])), math.sqrt(6.0 / 3))
        self.assertLessEqual(np.max(np.abs(net.weights[1])), math.sqrt(6.0 / 16))
        self.assertFalse(any(np.any(b) for b in net.biases))

    def test_layer_mismatch(self):
        self.assertRaises(DimensionMismatch, DenseNet, [np.zeros((4, 3)), np.zeros((2, 5))], [np.zeros(4), np.zeros(2)])
        self.assertRaises(DimensionMismatch, DenseNet, [np.zeros((4, 3))], [np.zeros(3)])

    def test_identity(self):
        x = np.array([1.0, -2.0, 3.0])
        self.assertArrayEqual(DenseNet.identity(3)(x), x)

    def test_batch_and_vector_inputs_agree(self):
        net = DenseNet.he_uniform([3, 8, 2], rng_stream(1))
        batch = rng_stream(2).normal(size=(5, 3))
        out = net(batch)
        self.assertEqual(out.shape, (5, 2))
        self.assertArrayAlmostEqual(net(batch[2]), out[2], rtol=1e-12)

    def test_wrong_input_width(self):
        net = DenseNet.he_uniform([3, 2], rng_stream(1))
        self.assertRaises(DimensionMismatch, net, np.zeros(4))


class BackwardTests(TestCase):
    def setUp(self):
        rng = rng_stream(3)
        self.net = DenseNet.he_uniform([3, 5, 4, 2], rng)
        for b in self.net.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        self.x = rng.normal(size=(6, 3))
        self.weights = rng.normal(size=(6, 2))

    def loss(self, x=None):
        return float(np.sum(mlp_forward(self.net, self.x if x is None else x)[0] * self.weights))

    def test_parameter_gradients(self):
        _, cache = mlp_forward(self.net, self.x)
        grads, _ = mlp_backward(self.net, cache, self.weights)
        for param, grad in zip(self.net.parameters(), grads):
            self.assertEqual(param.shape, grad.shape)
            self.assertLess(relative_error(numeric_gradient(self.loss, param), grad), 1e-6)

    def test_input_gradient(self):
        _, cache = mlp_forward(self.net, self.x)
        _, input_grad = mlp_backward(self.net, cache, self.weights)
        x = self.x.copy()
        numeric = numeric_gradient(lambda: self.loss(x), x)
        self.assertLess(relative_error(numeric, input_grad), 1e-6)

    def test_vector_input_gradient_shape(self):
        _, cache = mlp_forward(self.net, self.x[0])
        _, input_grad = mlp_backward(self.net, cache, self.weights[0])
        self.assertEqual(input_grad.shape, (3,))

    def test_stale_cache(self):
        _, cache = mlp_forward(self.net, self.x)
        self.net.touch()
        self.assertRaises(StaleCacheError, mlp_backward, self.net, cache, self.weights)

    def test_cache_from_another_network(self):
        other = DenseNet.he_uniform([3, 5, 4, 2], rng_stream(4))
        _, cache = mlp_forward(other, self.x)
        self.assertRaises(StaleCacheError, mlp_backward, self.net, cache, self.weights)

    def test_output_gradient_shape(self):
        _, cache = mlp_forward(self.net, self.x)
        self.assertRaises(DimensionMismatch, mlp_backward, self.net, cache, np.zeros((6, 3)))


class AdamTests(TestCase):
    def test_first_step_moves_by_learning_rate(self):
        params = [np.array([1.0, -2.0, 0.5])]
        state = OptimizerState.for_parameters(params, lr=0.01)
        adam_update(params, [np.array([3.0, -0.2, 40.0])], state)
        self.assertArrayAlmostEqual(params[0], [0.99, -1.99, 0.49], rtol=1e-6)
        self.assertEqual(state.step, 1)

    def test_minimises_quadratic(self):
        params = [np.array([5.0, -3.0])]
        state = OptimizerState.for_parameters(params, lr=0.01)
        for _ in range(3000):
            adam_update(params, [2.0 * params[0]], state)
        self.assertLess(np.max(np.abs(params[0])), 0.05)

    def test_mismatched_lists(self):
        params = [np.zeros(2)]
        state = OptimizerState.for_parameters(params, lr=0.1)
        self.assertRaises(DimensionMismatch, adam_update, params, [np.zeros(2), np.zeros(2)], state)
        self.assertRaises(DimensionMismatch, adam_update, params, [np.zeros(3)], state)
