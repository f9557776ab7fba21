# pylint: disable=missing-class-docstring
# pylint: disable=missing-function-docstring

"""Unit tests
"""

import os
import tempfile
import unittest
from math import (
    pi
)

import numpy as np

# pylint: disable wrong-import-position
from prosthestim.common import (
    FieldError,
    NonFiniteInputError,
    SimulationDivergedError
)
from prosthestim.plant import (
    TRACE_COLUMNS,
    GroundTruthTrace,
    JointState,
    PlantParams,
    continuous_matrices,
    cycle_duration_for,
    default_profile,
    generate_gait,
    grf_from_accel,
    mechanical_energy,
    natural_period,
    output_matrices,
    output_vector,
    rk4,
    sampled_cycle_duration,
    state_derivative,
    step,
    torque_from_grf
)


class PlantParamsTest(unittest.TestCase):

    def test___init__(self):
        params = PlantParams()
        self.assertEqual(params.stiffness, 400.0)
        self.assertAlmostEqual(params.gravity, 9.81)
        for name in ('inertia', 'mass', 'dt'):
            with self.assertRaises(FieldError) as context:
                PlantParams(**{name: 0.0})
            self.assertEqual(context.exception.field, name)
        with self.assertRaises(FieldError):
            PlantParams(damping=-1.0)
        with self.assertRaises(FieldError):
            PlantParams(stiffness=float('nan'))


class DynamicsTest(unittest.TestCase):

    def test_state_derivative(self):
        params = PlantParams(inertia=0.1, damping=0.5, stiffness=10.0)
        self.assertEqual(
            state_derivative(JointState(0.0, 0.0), 0.0, params), (0.0, 0.0)
        )
        theta_dot, theta_ddot = state_derivative(
            JointState(0.1, 0.2), 2.0, params
        )
        self.assertAlmostEqual(theta_dot, 0.2)
        self.assertAlmostEqual(theta_ddot, 9.0)
        for stiffness in (1.0, 10.0, 400.0):
            params = PlantParams(stiffness=stiffness)
            derivative = state_derivative(
                JointState(3.0 / stiffness, 0.0), 3.0, params
            )
            self.assertAlmostEqual(derivative[0], 0.0)
            self.assertAlmostEqual(derivative[1], 0.0, places=9)
        with self.assertRaises(NonFiniteInputError):
            state_derivative(JointState(0.0, 0.0), float('inf'), params)

    def test_state_derivative_linearity(self):
        params = PlantParams(inertia=0.1, damping=0.5, stiffness=10.0)
        first = (JointState(0.1, -0.4), 1.5)
        second = (JointState(-0.3, 0.2), -0.7)
        total = (
            JointState(first[0].theta + second[0].theta,
                       first[0].theta_dot + second[0].theta_dot),
            first[1] + second[1]
        )
        expected = np.add(state_derivative(*first, params),
                          state_derivative(*second, params))
        np.testing.assert_allclose(
            state_derivative(*total, params), expected, atol=1e-12
        )

    def test_joint_state(self):
        self.assertEqual(JointState(-pi, 1.0).theta, -pi)
        with self.assertRaises(FieldError):
            JointState(3.2, 0.0)
        with self.assertRaises(NonFiniteInputError):
            JointState(0.0, float('nan'))

    def test_step(self):
        params = PlantParams()
        self.assertEqual(step(JointState(0.0, 0.0), 0.0, params),
                         JointState(0.0, 0.0))
        with self.assertRaises(SimulationDivergedError) as context:
            step(JointState(3.1, 100.0), 0.0, params, step_index=17)
        self.assertEqual(context.exception.step_index, 17)

    def test_step_free_oscillation(self):
        params = PlantParams(inertia=0.625 / pi ** 2, damping=0.0,
                             stiffness=10.0, dt=1e-4)
        self.assertAlmostEqual(natural_period(params), 0.5)
        state = JointState(0.1, 0.0)
        for index in range(5000):
            state = step(state, 0.0, params, index)
        self.assertLess(abs(state.theta - 0.1), 1e-6)
        self.assertLess(abs(state.theta_dot), 1e-4)

    def test_step_response(self):
        params = PlantParams()
        state = JointState(0.0, 0.0)
        for index in range(1000):
            state = step(state, 2.0, params, index)
        self.assertLess(abs(state.theta - 2.0 / params.stiffness), 1e-4)

    def test_rk4_convergence(self):
        params = PlantParams(inertia=0.1, damping=0.5, stiffness=10.0)
        zeta_omega = 0.5 / (2 * 0.1)
        omega_d = np.sqrt(10.0 / 0.1 - zeta_omega ** 2)
        exact = np.exp(-zeta_omega) * (
            0.1 * np.cos(omega_d) + zeta_omega * 0.1 / omega_d *
            np.sin(omega_d)
        )
        errors = []
        for dt in (1e-2, 5e-3):
            theta, theta_dot = 0.1, 0.0
            for _ in range(int(round(1.0 / dt))):
                theta, theta_dot = rk4(theta, theta_dot, 0.0, params, dt)
            errors.append(abs(theta - exact))
        self.assertTrue(12.0 <= errors[0] / errors[1] <= 20.0)

    def test_energy_dissipation(self):
        params = PlantParams()
        state = JointState(0.1, 0.0)
        energy = mechanical_energy(state, params)
        for index in range(2000):
            state = step(state, 0.0, params, index)
            current = mechanical_energy(state, params)
            self.assertLessEqual(current, energy + 1e-9)
            energy = current


class OutputTest(unittest.TestCase):

    def test_grf_from_accel(self):
        params = PlantParams(mass=70.0)
        self.assertAlmostEqual(grf_from_accel(0.0, params), 686.7)
        self.assertEqual(grf_from_accel(-9.81, params), 0.0)
        self.assertAlmostEqual(grf_from_accel(2.0, params), 826.7)
        self.assertEqual(grf_from_accel(-20.0, params), 0.0)
        forces = grf_from_accel(np.array([-20.0, 0.0]), params)
        self.assertTrue(np.all(forces >= 0))

    def test_torque_from_grf(self):
        self.assertEqual(torque_from_grf(0.0, 500.0), 0.0)
        self.assertAlmostEqual(torque_from_grf(0.1, 686.7), 68.67)
        self.assertAlmostEqual(torque_from_grf(-0.05, 400.0), -20.0)
        with self.assertRaises(ValueError):
            torque_from_grf(0.1, -1.0)

    def test_output_vector(self):
        output = output_vector(JointState(0.1, 0.0), 0.0, 0.1,
                               PlantParams(mass=70.0))
        np.testing.assert_allclose(output, (0.1, 0.0, 686.7, 68.67))
        output = output_vector(JointState(0.0, 0.0), -9.81, 0.1,
                               PlantParams(mass=70.0))
        np.testing.assert_allclose(output, (0.0, 0.0, 0.0, 0.0), atol=1e-12)
        output = output_vector(JointState(0.2, -0.3), 1.0, 0.12,
                               PlantParams(mass=60.0))
        np.testing.assert_allclose(output, (0.2, -0.3, 648.6, 77.832))

    def test_continuous_matrices(self):
        params = PlantParams(inertia=0.1, damping=0.5, stiffness=10.0)
        a_matrix, b_matrix = continuous_matrices(params)
        state = np.array([0.1, 0.2])
        derivative = a_matrix @ state + b_matrix[:, 0] * 2.0
        np.testing.assert_allclose(
            derivative, state_derivative(JointState(0.1, 0.2), 2.0, params)
        )

    def test_output_matrices(self):
        params = PlantParams()
        c_matrix, d_matrix = output_matrices()
        state = JointState(0.05, -0.2)
        output = output_vector(state, 0.0, 0.1, params)
        linear = c_matrix @ np.array([state.theta, state.theta_dot]) + \
            d_matrix[:, 0] * output[3]
        np.testing.assert_allclose(linear[[0, 1, 3]],
                                   np.array(output)[[0, 1, 3]])


class GaitTest(unittest.TestCase):

    def test_cycle_duration_for(self):
        self.assertAlmostEqual(cycle_duration_for('walking', 2.0), 1.3)
        self.assertLess(cycle_duration_for('walking', 3.0),
                        cycle_duration_for('walking', 1.0))
        with self.assertRaises(NotImplementedError):
            cycle_duration_for('swimming', 2.0)

    def test_generate_gait(self):
        params = PlantParams()
        profile = default_profile('walking', 2.0)
        trace = generate_gait(profile, 1, params, seed=0)
        self.assertEqual(len(trace),
                         int(round(profile.cycle_duration / params.dt)))
        force = trace.f_grf
        peaks = [
            i for i in range(1, len(force) - 1)
            if force[i] > force[i - 1] and force[i] >= force[i + 1]
        ]
        self.assertEqual(len(peaks), 2)
        self.assertTrue(np.all(np.abs(trace.theta) < pi))
        np.testing.assert_allclose(trace.ankle_moment, trace.tau_ext)

    def test_generate_gait_divergence(self):
        with self.assertRaises(SimulationDivergedError):
            generate_gait(default_profile('walking', 2.0), 1,
                          PlantParams(stiffness=1.0), seed=0)

    def test_generate_gait_tasks(self):
        params = PlantParams()
        for task in ('sitting', 'running'):
            trace = generate_gait(default_profile(task, 2.0), 2, params, 1)
            self.assertTrue(np.all(trace.f_grf >= 0))
            self.assertEqual(len(trace.cycle_starts()), 2)

    def test_generate_gait_determinism(self):
        params = PlantParams()
        profile = default_profile('walking', 2.0)
        first = generate_gait(profile, 2, params, seed=5)
        second = generate_gait(profile, 2, params, seed=5)
        other = generate_gait(profile, 2, params, seed=6)
        for name in TRACE_COLUMNS:
            np.testing.assert_array_equal(getattr(first, name),
                                          getattr(second, name))
        self.assertFalse(np.array_equal(first.f_grf, other.f_grf))
        with self.assertRaises(ValueError):
            generate_gait(profile, 0, params, seed=5)

    def test_to_csv(self):
        params = PlantParams()
        profile = default_profile('walking', 2.0)
        trace = generate_gait(profile, 1, params, seed=0)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'truth.csv')
            trace.to_csv(path)
            with open(path, encoding='utf-8') as file:
                self.assertEqual(file.readline().strip(),
                                 ','.join(TRACE_COLUMNS))
            loaded = GroundTruthTrace.from_csv(
                path, sampled_cycle_duration(profile, params.dt)
            )
        self.assertEqual(len(loaded), len(trace))
        np.testing.assert_allclose(loaded.theta, trace.theta, rtol=1e-12)
