# pylint: disable=missing-class-docstring
# pylint: disable=missing-function-docstring

"""Unit tests
"""

import unittest

import numpy as np

# pylint: disable wrong-import-position
from prosthestim.filter_extended import (
    ExtendedKalmanFilter,
    ekf_step,
    numerical_jacobian
)
from prosthestim.filter_kalman import (
    LinearModel,
    kf_step
)
from prosthestim.filter_model import (
    GaussianBelief,
    ProcessModel,
    transition,
    transition_jacobian
)
from prosthestim.random_streams import (
    substream
)
from prosthestim.sensors import (
    SensorFrame
)


class JacobianTest(unittest.TestCase):

    def test_transition_jacobian(self):
        model = ProcessModel()
        rng = substream(0, 'tests', 'jacobian')
        for _ in range(100):
            state = np.array([rng.normal(0.0, 0.1), rng.normal(0.0, 1.0),
                              rng.uniform(0.0, 1000.0)])
            r_cop = rng.uniform(-0.05, 0.15)
            analytic = transition_jacobian(model.plant, r_cop)
            numeric = numerical_jacobian(
                lambda x, r=r_cop: transition(x, r, model), state
            )
            error = np.max(np.abs(analytic - numeric)) / \
                np.max(np.abs(analytic))
            self.assertLess(error, 1e-5)


class EkfStepTest(unittest.TestCase):

    def test_ekf_step_linear(self):
        process = ProcessModel()
        model = LinearModel(process, r_cop=0.07, discretization='rk4')
        noise_cov = np.diag([4e-4, 4e-2, 100.0])
        rng = substream(1, 'tests', 'ekf')
        extended = GaussianBelief([0.02, 0.1, 700.0],
                                  np.diag([1e-2, 1e-2, 100.0]))
        linear = extended.copy()
        for index in range(500):
            frame = SensorFrame(index * 1e-3, rng.normal(0.0, 0.02),
                                rng.normal(0.0, 0.2),
                                700.0 + rng.normal(0.0, 10.0))
            extended = ekf_step(extended, frame, process, noise_cov, 0.07)
            linear = kf_step(linear, frame, model, noise_cov)
            np.testing.assert_allclose(extended.mean, linear.mean,
                                       rtol=1e-10, atol=1e-8)
            np.testing.assert_allclose(extended.cov, linear.cov,
                                       rtol=1e-8, atol=1e-8)

    def test_step(self):
        noise_cov = np.diag([4e-4, 4e-2, 100.0])
        first = ExtendedKalmanFilter(ProcessModel(), noise_cov)
        second = ExtendedKalmanFilter(ProcessModel(), noise_cov)
        start = GaussianBelief([0.0, 0.0, 686.7], np.diag([1e-2, 1e-2, 1e2]))
        first.initialize(start)
        second.initialize(start)
        for index in range(20):
            frame = SensorFrame(index * 1e-3, 0.01 * index, 0.1, 690.0)
            first.step(frame, 0.05)
            second.step(frame, 0.05)
        np.testing.assert_array_equal(first.belief.mean, second.belief.mean)
        self.assertEqual(first.name, 'ekf')
