# pylint: disable=missing-class-docstring
# pylint: disable=missing-function-docstring

"""Unit tests
"""

import unittest

import numpy as np

# pylint: disable wrong-import-position
from prosthestim.common import (
    CovarianceNotPSDError,
    DimensionMismatchError,
    SimulationDivergedError,
    SingularInnovationError
)
from prosthestim.filter_model import (
    GaussianBelief,
    ProcessModel,
    UkfParams,
    check_angle,
    check_health,
    check_noise,
    cholesky_lower,
    discrete_transition,
    initial_belief,
    measure,
    measurement_matrix,
    solve_gain,
    transition
)
from prosthestim.plant import (
    PlantParams,
    rk4
)
from prosthestim.sensors import (
    SensorFrame
)


class UkfParamsTest(unittest.TestCase):

    def test___init__(self):
        with self.assertRaises(ValueError):
            UkfParams(alpha=0.0)
        with self.assertRaises(ValueError):
            UkfParams(alpha=1.5)
        with self.assertRaises(ValueError):
            UkfParams(kappa=-1.0)

    def test_lambda_(self):
        self.assertAlmostEqual(UkfParams(alpha=1.0).lambda_(3), 0.0)
        self.assertAlmostEqual(UkfParams(alpha=1e-3).lambda_(3),
                               3e-6 - 3.0)


class GaussianBeliefTest(unittest.TestCase):

    def test___init__(self):
        with self.assertRaises(DimensionMismatchError):
            GaussianBelief(np.zeros(3), np.eye(2))
        with self.assertRaises(ValueError):
            GaussianBelief([0.0, np.nan, 0.0], np.eye(3))
        belief = GaussianBelief([0.1, 0.2, 700.0], np.eye(3))
        self.assertEqual(belief.f_z, 700.0)
        copy = belief.copy()
        copy.mean[0] = 1.0
        self.assertEqual(belief.theta, 0.1)


class HealthTest(unittest.TestCase):

    def test_cholesky_lower(self):
        root = cholesky_lower(np.diag([4.0, 9.0]))
        np.testing.assert_allclose(root, np.diag([2.0, 3.0]))
        cholesky_lower(np.zeros((3, 3)))
        with self.assertRaises(CovarianceNotPSDError):
            cholesky_lower(np.diag([1.0, -1.0]))

    def test_check_health(self):
        check_health(GaussianBelief(np.zeros(3), np.diag([1e-8, 1.0, 1e4])))
        asymmetric = np.eye(3)
        asymmetric[0, 1] = 0.5
        with self.assertRaises(CovarianceNotPSDError):
            check_health(GaussianBelief(np.zeros(3), asymmetric))
        with self.assertRaises(CovarianceNotPSDError):
            check_health(GaussianBelief(np.zeros(3),
                                        np.diag([1.0, -1.0, 1.0])))


class TransitionTest(unittest.TestCase):

    def test_check_angle(self):
        belief = GaussianBelief([3.0, 0.0, 0.0], np.eye(3))
        self.assertIs(check_angle(belief, 4), belief)
        with self.assertRaises(SimulationDivergedError) as context:
            check_angle(GaussianBelief([-3.2, 0.0, 0.0], np.eye(3)), 4)
        self.assertEqual(context.exception.step_index, 4)

    def test_transition(self):
        model = ProcessModel()
        state = np.array([0.05, -0.3, 700.0])
        theta, theta_dot = rk4(0.05, -0.3, 0.1 * 700.0, model.plant)
        np.testing.assert_allclose(transition(state, 0.1, model),
                                   [theta, theta_dot, 700.0])
        states = np.stack([state, 2 * state])
        self.assertEqual(transition(states, 0.1, model).shape, (2, 3))

    def test_discrete_transition(self):
        plant = PlantParams()
        exact = discrete_transition(plant, 0.1, 'expm')
        runge_kutta = discrete_transition(plant, 0.1, 'rk4')
        np.testing.assert_allclose(exact, runge_kutta, rtol=1e-4, atol=1e-6)
        np.testing.assert_allclose(exact[2], [0.0, 0.0, 1.0])
        with self.assertRaises(ValueError):
            exact[0, 0] = 2.0
        with self.assertRaises(NotImplementedError):
            discrete_transition(plant, 0.1, 'euler')


class MeasurementTest(unittest.TestCase):

    def test_measurement_matrix(self):
        plant = PlantParams(mass=70.0)
        state = np.array([0.1, 0.2, 686.7])
        np.testing.assert_allclose(
            measure(state, ('gyro', 'accel', 'force'), plant),
            [0.2, 0.0, 686.7], atol=1e-12
        )
        h_matrix, offset = measurement_matrix(('gyro', 'accel'), plant)
        self.assertEqual(h_matrix.shape, (2, 3))
        self.assertEqual(offset.shape, (2,))
        with self.assertRaises(NotImplementedError):
            measurement_matrix(('baro',), plant)

    def test_check_noise(self):
        with self.assertRaises(DimensionMismatchError):
            check_noise(np.eye(3), ('gyro', 'accel'))
        with self.assertRaises(ValueError):
            check_noise(np.zeros((2, 2)), ('gyro', 'accel'))

    def test_solve_gain(self):
        gain = solve_gain(np.array([[2.0], [0.0], [1.0]]), np.array([[4.0]]))
        np.testing.assert_allclose(gain, [[0.5], [0.0], [0.25]])
        with self.assertRaises(SingularInnovationError):
            solve_gain(np.ones((3, 2)), np.array([[1.0, 1.0], [1.0, 1.0]]))


class InitialBeliefTest(unittest.TestCase):

    def test_initial_belief(self):
        plant = PlantParams(mass=70.0)
        belief = initial_belief(SensorFrame(0.0, 0.3, 0.0, 800.0), 0.1,
                                plant)
        np.testing.assert_allclose(
            belief.mean, [0.1 * 800.0 / plant.stiffness, 0.3, 800.0]
        )
        belief = initial_belief(SensorFrame(0.0, 0.3, 0.0), 0.1, plant,
                                (1.0, 2.0, 3.0))
        self.assertAlmostEqual(belief.f_z, 686.7)
        np.testing.assert_allclose(np.diag(belief.cov), [1.0, 2.0, 3.0])
