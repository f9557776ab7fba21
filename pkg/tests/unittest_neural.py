# pylint: disable=missing-class-docstring
# pylint: disable=missing-function-docstring

"""Unit tests
"""

import unittest

import numpy as np

# pylint: disable wrong-import-position
from prosthestim.common import (
    DimensionMismatchError,
    FieldError
)
from prosthestim.neural import (
    AdamOptimizer,
    LstmCellState,
    LstmLayerWeights,
    LstmNetwork,
    backward_and_adam_step,
    cell_step,
    dropout_mask,
    gaussian_kl,
    loss,
    loss_gradients,
    sigmoid
)
from prosthestim.random_streams import (
    substream
)


def weighted_output(network, window, weights):
    output, _, _ = network.forward(window)
    return float(np.sum(output * weights))


class SigmoidTest(unittest.TestCase):

    def test_sigmoid(self):
        values = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_allclose(values, (0.0, 0.5, 1.0))
        self.assertTrue(np.all(np.isfinite(values)))


class LstmLayerWeightsTest(unittest.TestCase):

    def test___init__(self):
        weights = LstmLayerWeights(np.zeros((12, 5)), np.zeros(12))
        self.assertEqual(weights.hidden_size, 3)
        self.assertEqual(weights.input_size, 2)
        matrix, bias = weights.gate('C')
        self.assertEqual(matrix.shape, (3, 5))
        self.assertEqual(bias.shape, (3,))
        with self.assertRaises(DimensionMismatchError):
            LstmLayerWeights(np.zeros((10, 5)), np.zeros(10))
        with self.assertRaises(DimensionMismatchError):
            LstmLayerWeights(np.zeros((12, 5)), np.zeros(4))
        with self.assertRaises(FieldError):
            LstmLayerWeights(np.full((12, 5), np.nan), np.zeros(12))


class CellStepTest(unittest.TestCase):

    def test_cell_step(self):
        rng = substream(3, 'test')
        weights = LstmLayerWeights(rng.normal(0.0, 1.0, (16, 7)),
                                   rng.normal(0.0, 1.0, 16))
        state = LstmCellState.zeros(4)
        for _ in range(20):
            state = cell_step(rng.normal(0.0, 5.0, 3), state, weights)
            self.assertTrue(np.all(np.abs(state.h) <= 1.0))
        batched = cell_step(np.zeros((2, 3)), LstmCellState.zeros(4, 2),
                            weights)
        self.assertEqual(batched.h.shape, (2, 4))
        with self.assertRaises(DimensionMismatchError):
            cell_step(np.zeros(2), LstmCellState.zeros(4), weights)
        with self.assertRaises(DimensionMismatchError):
            cell_step(np.zeros(3), LstmCellState.zeros(5), weights)

    def test_cell_step_zero_weights(self):
        weights = LstmLayerWeights(np.zeros((8, 3)), np.zeros(8))
        state = cell_step(np.array([1.0]),
                          LstmCellState(np.zeros(2), np.ones(2)), weights)
        # f = 0.5, candidate = 0
        np.testing.assert_allclose(state.c, (0.5, 0.5))
        np.testing.assert_allclose(state.h, 0.5 * np.tanh(0.5))


class DropoutMaskTest(unittest.TestCase):

    def test_dropout_mask(self):
        mask = dropout_mask((10000,), 0.2, substream(0, 'test'))
        dropped = np.mean(mask == 0)
        self.assertTrue(0.19 <= dropped <= 0.21)
        np.testing.assert_allclose(mask[mask > 0], 1.25)
        np.testing.assert_array_equal(
            dropout_mask((3, 2), 0.0, substream(0, 'test')), np.ones((3, 2))
        )


class LstmNetworkTest(unittest.TestCase):

    def test___init__(self):
        network = LstmNetwork(3, 2, units=5, layers=2)
        self.assertEqual(
            network.n_parameters(),
            20 * 8 + 20 + 20 * 10 + 20 + 2 * 5 + 2
        )
        self.assertEqual(network.params['lstm1.weight'].shape, (20, 10))
        forget = network.params['lstm0.bias'][:5]
        self.assertTrue(np.all(forget > 0.5))
        with self.assertRaises(FieldError):
            LstmNetwork(0, 1)
        with self.assertRaises(FieldError):
            LstmNetwork(1, 1, units=0)
        with self.assertRaises(FieldError):
            LstmNetwork(1, 1, dropout_rate=1.0)

    def test_forward_zero_weights(self):
        network = LstmNetwork(2, 2, units=4, layers=2, dropout_rate=0.0)
        for value in network.params.values():
            value[...] = 0.0
        network.params['dense.bias'][:] = (0.7, -1.5)
        output = network.predict(np.ones((6, 2)))
        np.testing.assert_allclose(output, (0.7, -1.5))

    def test_forward(self):
        network = LstmNetwork(2, 1, units=6, layers=2, seed=4)
        window = substream(1, 'test').normal(size=(3, 10, 2))
        first = network.predict(window)
        second = network.predict(window)
        self.assertEqual(first.shape, (3, 1))
        np.testing.assert_array_equal(first, second)
        np.testing.assert_allclose(network.predict(window[1]), first[1])
        with self.assertRaises(DimensionMismatchError):
            network.predict(np.zeros((10, 3)))
        with self.assertRaises(ValueError):
            network.forward(window, train=True)

    def test_copy(self):
        network = LstmNetwork(2, 1, units=3, layers=1)
        other = network.copy()
        other.params['dense.bias'][0] = 9.0
        self.assertEqual(network.params['dense.bias'][0], 0.0)

    def test_backward(self):
        for draw in range(100):
            with self.subTest(draw=draw):
                self.check_gradients(draw)

    def check_gradients(self, draw):
        network = LstmNetwork(2, 2, units=4, layers=2, dropout_rate=0.0,
                              seed=draw)
        rng = substream(draw, 'test')
        window = rng.normal(size=(2, 3, 2))
        weights = rng.normal(size=(2, 2))
        _, _, cache = network.forward(window, train=True)
        grads = network.backward(cache, weights)
        epsilon = 1e-5
        for name, value in network.params.items():
            numeric = np.zeros_like(value)
            for index in np.ndindex(value.shape):
                saved = value[index]
                value[index] = saved + epsilon
                upper = weighted_output(network, window, weights)
                value[index] = saved - epsilon
                lower = weighted_output(network, window, weights)
                value[index] = saved
                numeric[index] = (upper - lower) / (2 * epsilon)
            error = np.abs(grads[name] - numeric)
            scale = np.maximum(np.abs(numeric) + np.abs(grads[name]), 1e-3)
            self.assertLess(float(np.max(error / scale)), 1e-4, msg=name)

    def test_backward_variance_head(self):
        network = LstmNetwork(1, 1, units=3, layers=1, dropout_rate=0.0,
                              variance_head=True)
        window = np.linspace(-1.0, 1.0, 4).reshape(1, 4, 1)
        _, logvar, cache = network.forward(window, train=True)
        self.assertEqual(logvar.shape, (1, 1))
        grads = network.backward(cache, np.zeros((1, 1)), np.ones((1, 1)))
        np.testing.assert_allclose(grads['logvar.weight'], cache.head_input)
        np.testing.assert_array_equal(grads['dense.weight'], 0.0)


class LossTest(unittest.TestCase):

    def test_loss(self):
        self.assertEqual(loss([1.0, 2.0], [1.0, 2.0]), 0.0)
        self.assertAlmostEqual(loss([0.0, 0.0], [1.0, 1.0]), 1.0)
        self.assertAlmostEqual(
            loss([0.0], [1.0], ([0.0], [1.0]), (0.0, 1.0), lambda_=2.0), 1.0
        )
        with self.assertRaises(DimensionMismatchError):
            loss([0.0], [0.0, 1.0])
        with self.assertRaises(FieldError):
            loss([0.0], [0.0], lambda_=-1.0)
        with self.assertRaises(FieldError):
            loss([0.0], [0.0], lambda_=1.0)

    def test_gaussian_kl(self):
        self.assertEqual(float(gaussian_kl([0.0], [1.0], [0.0], [1.0])), 0.0)
        self.assertAlmostEqual(
            float(gaussian_kl([1.0], [1.0], [0.0], [1.0])), 0.5
        )
        self.assertGreater(float(gaussian_kl([0.0], [4.0], [0.0], [1.0])), 0)
        with self.assertRaises(ValueError):
            gaussian_kl([0.0], [0.0], [0.0], [1.0])

    def test_loss_gradients(self):
        output = np.array([[1.0], [3.0]])
        target = np.zeros((2, 1))
        value, d_output, d_logvar = loss_gradients(output, target)
        self.assertAlmostEqual(value, 5.0)
        np.testing.assert_allclose(d_output, [[1.0], [3.0]])
        self.assertIsNone(d_logvar)


class AdamOptimizerTest(unittest.TestCase):

    def test_step(self):
        optimizer = AdamOptimizer(learning_rate=0.01, clip_norm=1e9)
        params = {'w': np.array([1.0, -2.0, 0.5])}
        gradient = np.array([0.3, -4.0, 1e-3])
        optimizer.step(params, {'w': gradient})
        expected = np.array([1.0, -2.0, 0.5]) - \
            0.01 * gradient / (np.abs(gradient) + 1e-8)
        np.testing.assert_allclose(params['w'], expected, rtol=1e-10)
        self.assertEqual(optimizer.iteration, 1)

    def test_step_zero_gradient(self):
        optimizer = AdamOptimizer()
        params = {'w': np.array([1.0, 2.0])}
        optimizer.step(params, {'w': np.zeros(2)})
        np.testing.assert_array_equal(params['w'], (1.0, 2.0))

    def test_clip(self):
        optimizer = AdamOptimizer(clip_norm=1.0)
        clipped = optimizer.clip({'a': np.array([3.0]), 'b': np.array([4.0])})
        np.testing.assert_allclose(clipped['a'], 0.6)
        np.testing.assert_allclose(clipped['b'], 0.8)
        with self.assertRaises(FloatingPointError):
            optimizer.clip({'a': np.array([np.inf])})
        with self.assertRaises(FieldError):
            AdamOptimizer(learning_rate=0.0)

    def test_backward_and_adam_step(self):
        network = LstmNetwork(1, 1, units=4, layers=1, dropout_rate=0.0)
        window = np.ones((8, 5, 1))
        target = np.full((8, 1), 0.5)
        optimizer = AdamOptimizer(learning_rate=0.01)
        before = loss(network.predict(window), target)
        for _ in range(30):
            output, _, cache = network.forward(window, train=True)
            _, d_output, _ = loss_gradients(output, target)
            backward_and_adam_step(network, cache, d_output, optimizer)
        self.assertLess(loss(network.predict(window), target), before)
