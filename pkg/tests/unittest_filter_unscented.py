# pylint: disable=missing-class-docstring
# pylint: disable=missing-function-docstring

"""Unit tests
"""

import unittest

import numpy as np

# pylint: disable wrong-import-position
from prosthestim.filter_kalman import (
    kf_predict,
    linear_correct
)
from prosthestim.filter_model import (
    GaussianBelief,
    ProcessModel,
    UkfParams,
    discrete_transition,
    measurement_matrix,
    transition
)
from prosthestim.filter_unscented import (
    UnscentedKalmanFilter,
    sigma_points,
    ukf_correct,
    ukf_predict,
    ukf_update
)
from prosthestim.sensors import (
    SensorFrame
)

CHANNELS = ('gyro', 'accel', 'force')

NOISE = np.diag([4e-4, 4e-2, 100.0])


class SigmaPointsTest(unittest.TestCase):

    def test_sigma_points(self):
        ukf = UkfParams(alpha=1.0, beta=0.0, kappa=0.0)
        points, mean_weights, _ = sigma_points(
            GaussianBelief([0.0], [[1.0]]), ukf
        )
        np.testing.assert_allclose(points[:, 0], [0.0, 1.0, -1.0])
        np.testing.assert_allclose(mean_weights, [0.0, 0.5, 0.5])

    def test_sigma_points_count(self):
        for ukf in (UkfParams(), UkfParams(alpha=1.0),
                    UkfParams(alpha=0.5, beta=0.0, kappa=1.0)):
            points, mean_weights, _ = sigma_points(
                GaussianBelief(np.zeros(3), np.eye(3)), ukf
            )
            self.assertEqual(points.shape, (7, 3))
            self.assertAlmostEqual(float(np.sum(mean_weights)), 1.0,
                                   places=9)

    def test_sigma_points_zero_spread(self):
        mean = np.array([0.1, -0.2, 700.0])
        points, _, _ = sigma_points(
            GaussianBelief(mean, np.zeros((3, 3))), UkfParams()
        )
        np.testing.assert_allclose(points, np.tile(mean, (7, 1)), atol=1e-5)


class UkfPredictTest(unittest.TestCase):

    def test_ukf_predict_deterministic(self):
        model = ProcessModel(q=(0.0, 0.0, 0.0))
        mean = np.array([0.02, 0.1, 650.0])
        predicted = ukf_predict(GaussianBelief(mean, np.zeros((3, 3))), 0.1,
                                model, UkfParams(alpha=1.0))
        np.testing.assert_allclose(predicted.mean,
                                   transition(mean, 0.1, model), atol=1e-9)

    def test_ukf_predict_linear(self):
        model = ProcessModel()
        belief = GaussianBelief([0.02, 0.1, 650.0],
                                np.diag([1e-3, 1e-2, 50.0]))
        ukf = UkfParams(alpha=1.0, beta=2.0, kappa=0.0)
        predicted = ukf_predict(belief, 0.1, model, ukf)
        expected = kf_predict(belief,
                              discrete_transition(model.plant, 0.1, 'rk4'),
                              model.process_noise)
        np.testing.assert_allclose(predicted.mean, expected.mean,
                                   rtol=1e-10, atol=1e-8)
        np.testing.assert_allclose(predicted.cov, expected.cov,
                                   rtol=1e-8, atol=1e-8)


class UkfUpdateTest(unittest.TestCase):

    def setUp(self):
        self.model = ProcessModel()
        self.pred = GaussianBelief([0.02, 0.1, 650.0],
                                   np.diag([1e-3, 1e-2, 50.0]))
        self.frame = SensorFrame(0.0, 0.15, -0.3, 660.0)

    def test_ukf_update_uninformative(self):
        posterior = ukf_update(self.pred, self.frame, NOISE * 1e12,
                               UkfParams(alpha=1.0), self.model)
        np.testing.assert_allclose(posterior.mean, self.pred.mean,
                                   rtol=1e-6)
        np.testing.assert_allclose(posterior.cov, self.pred.cov, rtol=1e-6)

    def test_ukf_update_linear(self):
        ukf = UkfParams(alpha=1.0, beta=2.0, kappa=0.0)
        posterior, innovation = ukf_correct(self.pred, self.frame, NOISE,
                                            ukf, self.model)
        h_matrix, offset = measurement_matrix(CHANNELS, self.model.plant)
        expected, _ = linear_correct(self.pred, self.frame.measurement(),
                                     h_matrix, offset, NOISE, CHANNELS)
        np.testing.assert_allclose(posterior.mean, expected.mean,
                                   rtol=1e-10, atol=1e-8)
        np.testing.assert_allclose(posterior.cov, expected.cov,
                                   rtol=1e-8, atol=1e-8)
        self.assertEqual(innovation.channels, CHANNELS)
        self.assertGreater(innovation.nis, 0.0)

    def test_ukf_update_missing_force(self):
        frame = SensorFrame(0.0, 0.15, -0.3)
        posterior = ukf_update(self.pred, frame, NOISE[:2, :2],
                               UkfParams(), self.model)
        self.assertTrue(np.all(np.isfinite(posterior.mean)))
        with self.assertRaises(ValueError):
            ukf_update(self.pred, frame, NOISE, UkfParams(), self.model)


class UnscentedKalmanFilterTest(unittest.TestCase):

    def test_step(self):
        ukf = UnscentedKalmanFilter(ProcessModel(), NOISE)
        with self.assertRaises(RuntimeError):
            ukf.step(SensorFrame(0.0, 0.0, 0.0, 686.7), 0.05)
        ukf.initialize(GaussianBelief([0.0, 0.0, 686.7],
                                      np.diag([1e-2, 1e-2, 100.0])))
        belief = ukf.step(SensorFrame(0.001, 0.0, 0.0, 686.7), 0.05)
        self.assertEqual(belief.mean.shape, (3,))
        self.assertEqual(len(ukf.innovation.channels), 3)
        before = ukf.belief.copy()
        ukf.update(SensorFrame(0.002, 0.0, 0.0), channels=())
        np.testing.assert_array_equal(ukf.belief.mean, before.mean)
