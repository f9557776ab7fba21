"""Process and measurement models shared by every filter

The filters estimate the augmented state :math:`x = [\\theta, \\dot{\\theta},
F_z]^T`. Over one step the centre-of-pressure lever :math:`r` is a known
input and :math:`F_z` a random walk, so that the continuous dynamics are

.. math::

    \\dot{x} = M(r) x, \\qquad M(r) = \\begin{pmatrix}
        0 & 1 & 0 \\\\
        -k/I & -b/I & r/I \\\\
        0 & 0 & 0
    \\end{pmatrix}

The discrete transition :math:`f` is one Runge-Kutta step of the plant,
driven by :math:`\\tau = r F_z`. The measurement function maps the state to
the present channels among (gyroscope, accelerometer, force plate):

.. math::

    h(x) = \\left[ \\dot{\\theta}, F_z / m - g, F_z \\right]^T

All channels are affine in the state.
"""

from dataclasses import (
    dataclass,
    field
)
from functools import (
    lru_cache
)
from math import (
    isfinite,
    pi
)
from typing import (
    Optional,
    Tuple
)

import numpy as np
from scipy.linalg import (
    LinAlgError,
    cholesky,
    expm
)

from prosthestim.common import (
    STATE_DIM,
    ChannelSet,
    CovarianceNotPSDError,
    DimensionMismatchError,
    FieldError,
    Matrix,
    SimulationDivergedError,
    SingularInnovationError,
    Vector,
    require_finite
)
from prosthestim.plant import (
    PlantParams,
    rk4
)
from prosthestim.sensors import (
    SensorFrame
)


JITTER = 1e-12
"""Diagonal jitter added before a second Cholesky attempt"""

SYMMETRY_TOLERANCE = 1e-10

MAX_CONDITION_NUMBER = 1e15
"""Innovation covariances above this condition number are singular"""


@dataclass(frozen=True)
class UkfParams:
    """Sigma-point spread parameters

    The scaling is :math:`\\lambda = \\alpha^2 (n + \\kappa) - n`.
    """

    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise FieldError('alpha', 'must lie in (0, 1]')
        if self.beta < 0:
            raise FieldError('beta', 'must be >= 0')
        if self.kappa < 0:
            raise FieldError('kappa', 'must be >= 0')

    def lambda_(self, n: int = STATE_DIM) -> float:
        """Returns :math:`\\lambda` for a state of dimension ``n``

        Raises:
            ValueError: If :math:`n + \\lambda \\leq 0`
        """
        value = self.alpha ** 2 * (n + self.kappa) - n
        if n + value <= 0:
            raise ValueError(f'n + lambda must be > 0, got {n + value}')
        return value


@dataclass(frozen=True)
class ProcessModel:
    """Transition model of the augmented state

    Attributes:
        plant: Plant parameters, including the step ``dt``
        q: Diagonal of the process noise covariance :math:`Q`
        f_z_transition: Transition of :math:`F_z`, only ``random_walk``
    """

    plant: PlantParams = field(default_factory=PlantParams)
    q: Tuple[float, float, float] = (1e-8, 1e-4, 100.0)
    f_z_transition: str = 'random_walk'

    def __post_init__(self):
        if len(self.q) != STATE_DIM:
            raise FieldError('q', f'expects {STATE_DIM} entries')
        require_finite(q=self.q)
        if any(value < 0 for value in self.q):
            raise FieldError('q', 'entries must be >= 0')
        if self.f_z_transition != 'random_walk':
            raise NotImplementedError(
                f'Unknown F_z transition {self.f_z_transition}'
            )

    @property
    def process_noise(self) -> Matrix:
        """Returns :math:`Q`"""
        return np.diag(np.asarray(self.q, dtype=float))


class GaussianBelief:
    """Mean and covariance of the state estimate

    Args:
        mean: State vector of shape ``(n,)``
        cov: Covariance of shape ``(n, n)``

    Raises:
        DimensionMismatchError: If the shapes disagree
        NonFiniteInputError: If an entry is not finite
    """

    def __init__(self, mean: Vector, cov: Matrix):
        mean = np.array(mean, dtype=float).reshape(-1)
        cov = np.array(cov, dtype=float)
        if cov.shape != (len(mean), len(mean)):
            raise DimensionMismatchError(
                f'Covariance shape {cov.shape} does not match mean of '
                f'length {len(mean)}'
            )
        require_finite(mean=mean, cov=cov)
        self.mean = mean
        self.cov = cov

    def __repr__(self) -> str:
        return f'GaussianBelief(mean={self.mean!r}, cov={self.cov!r})'

    def copy(self) -> 'GaussianBelief':
        """Returns a deep copy"""
        return GaussianBelief(self.mean.copy(), self.cov.copy())

    @property
    def theta(self) -> float:
        """Estimated joint angle"""
        return float(self.mean[0])

    @property
    def theta_dot(self) -> float:
        """Estimated angular velocity"""
        return float(self.mean[1])

    @property
    def f_z(self) -> float:
        """Estimated vertical GRF"""
        return float(self.mean[2])


@dataclass(frozen=True)
class Innovation:
    """Measurement residual of one update

    Attributes:
        channels: Fused channels
        residual: :math:`y - \\hat{y}^-`
        covariance: Innovation covariance :math:`P_{yy}`
        nis: Normalized innovation squared
    """

    channels: ChannelSet
    residual: Vector
    covariance: Matrix
    nis: float


def symmetrize(matrix: Matrix) -> Matrix:
    """Returns :math:`(P + P^T) / 2`"""
    return 0.5 * (matrix + matrix.T)


def cholesky_lower(matrix: Matrix, context: str = '') -> Matrix:
    """Lower Cholesky factor, retried once with :data:`JITTER` on the
    diagonal

    Raises:
        CovarianceNotPSDError: If both attempts fail
    """
    if not np.all(np.isfinite(matrix)):
        raise CovarianceNotPSDError(matrix, context)
    try:
        return cholesky(matrix, lower=True)
    except LinAlgError:
        pass
    try:
        return cholesky(
            matrix + JITTER * np.eye(len(matrix)), lower=True
        )
    except LinAlgError as error:
        raise CovarianceNotPSDError(matrix, context) from error


def check_health(belief: GaussianBelief, context: str = '') -> GaussianBelief:
    """Asserts that the covariance is symmetric and positive semidefinite

    Raises:
        CovarianceNotPSDError: If either property fails
    """
    cov = belief.cov
    if not np.all(np.isfinite(belief.mean)):
        raise CovarianceNotPSDError(cov, f'{context}: non-finite mean')
    if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOLERANCE * max(
            1.0, float(np.max(np.abs(cov)))):
        raise CovarianceNotPSDError(cov, f'{context}: asymmetric')
    scale = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    scale[scale == 0] = 1.0
    # unit diagonal so that the jitter is relative to every variance
    cholesky_lower(cov / np.outer(scale, scale) + JITTER * np.eye(len(cov)),
                   context)
    return belief


def check_angle(belief: GaussianBelief, step_index: int) -> GaussianBelief:
    """Asserts that the mean angle stays within :math:`[-\\pi, \\pi]`

    Raises:
        SimulationDivergedError: If the predicted angle leaves the range
    """
    theta = float(belief.mean[0])
    if not isfinite(theta) or abs(theta) > pi:
        raise SimulationDivergedError(step_index, theta)
    return belief


def augmented_matrix(plant: PlantParams, r_cop: float) -> Matrix:
    """Returns the continuous system matrix :math:`M(r)`"""
    return np.array([
        [0.0, 1.0, 0.0],
        [-plant.stiffness / plant.inertia, -plant.damping / plant.inertia,
         r_cop / plant.inertia],
        [0.0, 0.0, 0.0],
    ])


def transition(states: np.ndarray, r_cop: float, model: ProcessModel):
    """Advances states by one step

    Args:
        states: Array of shape ``(3,)`` or ``(m, 3)``
        r_cop: COP lever held over the step
        model: Process model

    The angle bound is not enforced on individual states here; estimators
    check it on the predicted mean with :func:`check_angle`.

    Returns:
        The propagated states, same shape
    """
    states = np.asarray(states, dtype=float)
    theta, theta_dot, f_z = states[..., 0], states[..., 1], states[..., 2]
    theta_next, theta_dot_next = rk4(theta, theta_dot, r_cop * f_z,
                                     model.plant)
    return np.stack([theta_next, theta_dot_next, f_z], axis=-1)


def transition_jacobian(plant: PlantParams, r_cop: float) -> Matrix:
    """Jacobian of :func:`transition`, by the chain rule over the four
    Runge-Kutta stages

    Each stage slope :math:`k_j = M x_j` has derivative
    :math:`K_j = M \\partial x_j / \\partial x`, with
    :math:`\\partial x_1 / \\partial x = I`,
    :math:`\\partial x_{2,3} / \\partial x = I + \\frac{h}{2} K_{1,2}` and
    :math:`\\partial x_4 / \\partial x = I + h K_3`.
    """
    h = plant.dt
    identity = np.eye(STATE_DIM)
    slope = augmented_matrix(plant, r_cop)
    k1 = slope
    k2 = slope @ (identity + 0.5 * h * k1)
    k3 = slope @ (identity + 0.5 * h * k2)
    k4 = slope @ (identity + h * k3)
    return identity + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@lru_cache(maxsize=4096)
def discrete_transition(
        plant: PlantParams,
        r_cop: float,
        discretization: str = 'expm') -> Matrix:
    """Discrete transition matrix of the linear model

    Args:
        plant: Plant parameters
        r_cop: COP lever held over the step
        discretization: ``expm`` for the exact zero-order-hold map
            :math:`e^{M h}`, ``rk4`` for the Runge-Kutta map

    Raises:
        NotImplementedError: For an unknown discretization
    """
    if discretization == 'expm':
        matrix = expm(augmented_matrix(plant, r_cop) * plant.dt)
    elif discretization == 'rk4':
        matrix = transition_jacobian(plant, r_cop)
    else:
        raise NotImplementedError(f'Unknown discretization {discretization}')
    matrix.setflags(write=False)
    return matrix


def measurement_matrix(
        channels: ChannelSet,
        plant: PlantParams) -> Tuple[Matrix, Vector]:
    """Returns :math:`(H, c)` such that :math:`h(x) = H x + c` on
    ``channels``

    Raises:
        NotImplementedError: For an unknown channel
    """
    rows = []
    offsets = []
    for channel in channels:
        if channel == 'gyro':
            rows.append([0.0, 1.0, 0.0])
            offsets.append(0.0)
        elif channel == 'accel':
            rows.append([0.0, 0.0, 1.0 / plant.mass])
            offsets.append(-plant.gravity)
        elif channel == 'force':
            rows.append([0.0, 0.0, 1.0])
            offsets.append(0.0)
        else:
            raise NotImplementedError(f'Unknown channel {channel}')
    return np.array(rows).reshape(len(channels), STATE_DIM), np.array(offsets)


def measure(states: np.ndarray, channels: ChannelSet,
            plant: PlantParams) -> np.ndarray:
    """Applies :math:`h` to states of shape ``(3,)`` or ``(m, 3)``"""
    h_matrix, offset = measurement_matrix(channels, plant)
    return np.asarray(states) @ h_matrix.T + offset


def check_noise(noise_cov: Matrix, channels: ChannelSet) -> Matrix:
    """Validates a measurement covariance against the fused channels

    Raises:
        DimensionMismatchError: If the shape does not match the channels
        ValueError: If a diagonal entry is not positive
    """
    noise_cov = np.asarray(noise_cov, dtype=float)
    if noise_cov.shape != (len(channels), len(channels)):
        raise DimensionMismatchError(
            f'Measurement covariance of shape {noise_cov.shape} for '
            f'channels {channels}'
        )
    require_finite(noise_cov=noise_cov)
    if np.any(np.diag(noise_cov) <= 0):
        raise FieldError(
            'noise_cov', 'must be nonsingular on the present channels'
        )
    return noise_cov


def solve_gain(cross_cov: Matrix, innovation_cov: Matrix) -> Matrix:
    """Returns :math:`K = P_{xy} P_{yy}^{-1}`

    Raises:
        SingularInnovationError: If :math:`P_{yy}` is singular
    """
    condition_number = float(np.linalg.cond(innovation_cov))
    if not np.isfinite(condition_number) or \
            condition_number > MAX_CONDITION_NUMBER:
        raise SingularInnovationError(condition_number)
    return np.linalg.solve(innovation_cov, cross_cov.T).T


def make_innovation(
        channels: ChannelSet,
        residual: Vector,
        innovation_cov: Matrix) -> Innovation:
    """Builds an :class:`Innovation` with its normalized squared norm"""
    nis = float(residual @ np.linalg.solve(innovation_cov, residual))
    return Innovation(channels, residual, innovation_cov, nis)


def initial_mean(frame: SensorFrame, r_cop: float,
                 plant: PlantParams) -> Vector:
    """Initial state guessed from the first frame

    The force comes from the plate, or from the accelerometer when the plate
    is absent; the angle is the static equilibrium of the resulting torque.
    """
    if frame.f_z_meas is not None:
        f_z = frame.f_z_meas
    else:
        f_z = max(0.0, plant.mass * (plant.gravity + frame.z_ddot_meas))
    theta = r_cop * f_z / plant.stiffness if plant.stiffness > 0 else 0.0
    return np.array([theta, frame.omega, f_z])


DEFAULT_INITIAL_VARIANCE = (1e-2, 1e-2, 100.0)


def initial_belief(
        frame: SensorFrame,
        r_cop: float,
        plant: PlantParams,
        variance: Optional[Tuple[float, float, float]] = None
) -> GaussianBelief:
    """Returns the initial belief of a run"""
    variance = DEFAULT_INITIAL_VARIANCE if variance is None else variance
    return GaussianBelief(initial_mean(frame, r_cop, plant), np.diag(variance))


class Estimator:
    """Common interface of the sequential estimators

    An estimator owns its belief. :meth:`step` predicts over one sample with
    the COP lever of the previous frame held, then corrects with the frame.

    Args:
        model: Process model
        noise_cov: Measurement covariance over every channel
            (gyro, accel, force)
    """

    name = 'estimator'

    def __init__(self, model: ProcessModel, noise_cov: Matrix):
        self.model = model
        self.noise_cov = np.asarray(noise_cov, dtype=float)
        self.belief: Optional[GaussianBelief] = None
        self.innovation: Optional[Innovation] = None
        self.steps = 0

    def initialize(self, belief: GaussianBelief) -> None:
        """Sets the belief of the first frame"""
        self.belief = check_health(belief.copy(), f'{self.name} init')
        self.innovation = None
        self.steps = 0

    def _predicted(self, belief: GaussianBelief) -> GaussianBelief:
        """Stores a time update and counts it

        Raises:
            SimulationDivergedError: If the predicted angle leaves
                :math:`[-\\pi, \\pi]`
        """
        self.steps += 1
        self.belief = check_angle(belief, self.steps)
        return self.belief

    def channel_noise(self, channels: ChannelSet) -> Matrix:
        """Restriction of the measurement covariance to ``channels``"""
        index = [('gyro', 'accel', 'force').index(c) for c in channels]
        return self.noise_cov[np.ix_(index, index)]

    def predict(self, r_cop: float) -> GaussianBelief:
        """Time update

        Raises:
            SimulationDivergedError: If the predicted angle leaves
                :math:`[-\\pi, \\pi]`
        """
        raise NotImplementedError()

    def update(self, frame: SensorFrame,
               channels: Optional[ChannelSet] = None) -> GaussianBelief:
        """Measurement update"""
        raise NotImplementedError()

    def step(self, frame: SensorFrame, r_cop: float) -> GaussianBelief:
        """Predicts with the lever ``r_cop`` and corrects with ``frame``

        Raises:
            RuntimeError: If the estimator is not initialized
        """
        if self.belief is None:
            raise RuntimeError(f'{self.name} used before initialize()')
        self.predict(r_cop)
        return self.update(frame)
