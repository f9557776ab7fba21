# pylint: disable=missing-class-docstring
# pylint: disable=missing-function-docstring

"""Unit tests
"""

import unittest

import numpy as np

# pylint: disable wrong-import-position
from prosthestim.filter_kalman import (
    KalmanFilter,
    LinearModel,
    kf_step
)
from prosthestim.filter_model import (
    GaussianBelief,
    ProcessModel,
    discrete_transition,
    measure
)
from prosthestim.random_streams import (
    substream
)
from prosthestim.sensors import (
    SensorFrame
)

CHANNELS = ('gyro', 'accel', 'force')


class LinearModelTest(unittest.TestCase):

    def test___init__(self):
        with self.assertRaises(NotImplementedError):
            LinearModel(discretization='euler')
        with self.assertRaises(NotImplementedError):
            KalmanFilter(ProcessModel(), np.eye(3), 'euler')


class KfStepTest(unittest.TestCase):

    def test_kf_step_noiseless(self):
        process = ProcessModel(q=(0.0, 0.0, 0.0))
        model = LinearModel(process, r_cop=0.08)
        transition_matrix = model.transition_matrix
        state = np.array([0.015, 0.0, 750.0])
        belief = GaussianBelief(state, np.zeros((3, 3)))
        noise_cov = np.diag([1e-12, 1e-12, 1e-12])
        for index in range(200):
            state = transition_matrix @ state
            y = measure(state, CHANNELS, process.plant)
            belief = kf_step(belief, SensorFrame(index * 1e-3, *y), model,
                             noise_cov)
            np.testing.assert_allclose(belief.mean, state, rtol=1e-9,
                                       atol=1e-9)

    def test_kf_step_riccati(self):
        model = LinearModel(ProcessModel(), r_cop=0.05)
        noise_cov = np.diag([4e-4, 4e-2, 100.0])
        belief = GaussianBelief([0.0, 0.0, 686.7],
                                np.diag([1e-2, 1e-2, 100.0]))
        frame = SensorFrame(0.0, 0.0, 0.0, 686.7)
        previous = belief.cov
        for _ in range(3000):
            belief = kf_step(belief, frame, model, noise_cov)
            change = np.linalg.norm(belief.cov - previous)
            previous = belief.cov
        self.assertLess(change, 1e-10 * np.linalg.norm(belief.cov))

    def test_kf_step_consistency(self):
        process = ProcessModel(q=(1e-8, 1e-4, 1.0))
        r_cop = 0.05
        transition_matrix = discrete_transition(process.plant, r_cop)
        noise_cov = np.diag([0.02 ** 2, 0.2 ** 2, 10.0 ** 2])
        rng = substream(0, 'tests', 'kalman')
        state = np.array([0.09, 0.0, 700.0])
        kalman = KalmanFilter(process, noise_cov)
        kalman.initialize(GaussianBelief(state, np.diag([1e-2, 1e-2, 100.0])))
        nis = []
        for index in range(1, 5000):
            state = transition_matrix @ state + \
                rng.standard_normal(3) * np.sqrt(process.q)
            y = measure(state, CHANNELS, process.plant) + \
                rng.standard_normal(3) * np.sqrt(np.diag(noise_cov))
            kalman.step(SensorFrame(index * 1e-3, *y), r_cop)
            if index > 100:
                nis.append(kalman.innovation.nis)
        self.assertTrue(0.7 * 3 <= np.mean(nis) <= 1.3 * 3)
