# pylint: disable=missing-class-docstring
# pylint: disable=missing-function-docstring

"""Unit tests
"""

import os
import tempfile
import unittest

import numpy as np

# pylint: disable wrong-import-position
from prosthestim.common import (
    SimulationDivergedError
)
from prosthestim.filters import (
    FILTER_KINDS,
    FILTER_TRACE_COLUMNS,
    ExtendedKalmanFilter,
    GaussianBelief,
    KalmanFilter,
    ProcessModel,
    UkfParams,
    UnscentedKalmanFilter,
    make_estimator,
    nominal_levers,
    run_estimator
)
from prosthestim.plant import (
    PlantParams,
    default_profile,
    generate_gait
)
from prosthestim.sensors import (
    NoiseSpec,
    SensorStream,
    corrupt_trace,
    noise_covariance
)


def walking_run(cycles: int, dropout_probability: float = 0.0):
    params = PlantParams()
    profile = default_profile('walking', 2.0)
    truth = generate_gait(profile, cycles, params, seed=0)
    stream = corrupt_trace(truth, NoiseSpec(seed=1),
                           dropout_probability=dropout_probability)
    levers = nominal_levers(profile, stream.t, truth.cycle_duration)
    return truth, stream, levers


class MakeEstimatorTest(unittest.TestCase):

    def test_make_estimator(self):
        noise_cov = noise_covariance(NoiseSpec())
        self.assertIsInstance(
            make_estimator('kf', ProcessModel(), noise_cov), KalmanFilter
        )
        self.assertIsInstance(
            make_estimator('ekf', ProcessModel(), noise_cov),
            ExtendedKalmanFilter
        )
        self.assertIsInstance(
            make_estimator('ukf', ProcessModel(), noise_cov),
            UnscentedKalmanFilter
        )
        with self.assertRaises(NotImplementedError):
            make_estimator('pf', ProcessModel(), noise_cov)

    def test_predict_divergence(self):
        noise_cov = noise_covariance(NoiseSpec())
        for kind in FILTER_KINDS:
            estimator = make_estimator(kind, ProcessModel(), noise_cov)
            estimator.initialize(
                GaussianBelief([3.1, 200.0, 0.0], np.eye(3))
            )
            with self.assertRaises(SimulationDivergedError,
                                   msg=kind) as context:
                estimator.predict(0.0)
            self.assertEqual(context.exception.step_index, 1)


class NominalLeversTest(unittest.TestCase):

    def test_nominal_levers(self):
        truth, stream, levers = walking_run(1)
        np.testing.assert_array_equal(levers, truth.r_cop)
        self.assertEqual(len(levers), len(stream))


class RunEstimatorTest(unittest.TestCase):

    def test_run_estimator(self):
        truth, stream, levers = walking_run(1)
        noise_cov = noise_covariance(NoiseSpec())
        trace = run_estimator(
            make_estimator('ukf', ProcessModel(), noise_cov), stream, levers
        )
        self.assertEqual(trace.mean.shape, (len(stream), 3))
        self.assertTrue(np.all(np.isfinite(trace.mean)))
        self.assertTrue(np.all(trace.cov_diag > 0))
        filtered = np.sqrt(np.mean((trace.f_z - truth.f_grf) ** 2))
        raw = np.sqrt(np.mean((stream.f_z - truth.f_grf) ** 2))
        self.assertLess(filtered, raw)
        with self.assertRaises(ValueError):
            run_estimator(make_estimator('kf', ProcessModel(), noise_cov),
                          stream, levers[:-1])

    def test_run_estimator_unscented_exactness(self):
        _, walk, _ = walking_run(9, dropout_probability=0.2)
        steps = 10000
        stream = SensorStream(walk.t[:steps], walk.omega[:steps],
                              walk.z_ddot[:steps], walk.f_z[:steps])
        levers = np.full(steps, 0.1)
        noise_cov = noise_covariance(NoiseSpec())
        ukf = make_estimator('ukf', ProcessModel(), noise_cov,
                             UkfParams(alpha=1.0, beta=2.0, kappa=0.0))
        kf = make_estimator('kf', ProcessModel(), noise_cov,
                            discretization='rk4')
        unscented = run_estimator(ukf, stream, levers)
        linear = run_estimator(kf, stream, levers)
        extended = run_estimator(
            make_estimator('ekf', ProcessModel(), noise_cov), stream, levers
        )
        np.testing.assert_allclose(unscented.mean, linear.mean, rtol=1e-10,
                                   atol=1e-8)
        np.testing.assert_allclose(unscented.cov_diag, linear.cov_diag,
                                   rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(ukf.belief.cov, kf.belief.cov, rtol=1e-8,
                                   atol=1e-8)
        self.assertEqual(ukf.steps, steps - 1)
        np.testing.assert_allclose(extended.mean, linear.mean, rtol=1e-10,
                                   atol=1e-8)
        dims = set(unscented.dims.tolist())
        self.assertEqual(dims, {2, 3})

    def test_to_csv(self):
        _, stream, levers = walking_run(1)
        trace = run_estimator(
            make_estimator('ekf', ProcessModel(),
                           noise_covariance(NoiseSpec())),
            stream, levers
        )
        mean_nis, mean_dim = trace.mean_nis()
        self.assertTrue(np.isfinite(mean_nis))
        self.assertEqual(mean_dim, 3.0)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'trace.csv')
            trace.to_csv(path)
            with open(path, encoding='utf-8') as file:
                header = file.readline().strip()
                rows = file.read().splitlines()
        self.assertEqual(header, ','.join(FILTER_TRACE_COLUMNS))
        self.assertEqual(len(rows), len(stream))
