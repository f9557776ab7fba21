"""Implementation of the linear Kalman filter

For a fixed centre-of-pressure lever :math:`r`, the augmented plant is linear
and time invariant, :math:`x_{t+1} = \\Phi x_t + w_t` with
:math:`\\Phi = e^{M(r) h}`. The filter alternates

.. math::

    \\hat{x}^- = \\Phi \\hat{x}, \\qquad P^- = \\Phi P \\Phi^T + Q

and

.. math::

    S = H P^- H^T + R, \\qquad K = P^- H^T S^{-1}, \\qquad
    \\hat{x} = \\hat{x}^- + K (y - H \\hat{x}^- - c), \\qquad
    P = P^- - K S K^T

See also:
    `Wikipedia page <https://en.wikipedia.org/wiki/Kalman_filter>`_
"""

from dataclasses import (
    dataclass,
    field
)
from typing import (
    Optional,
    Tuple
)

import numpy as np

from prosthestim.common import (
    ChannelSet,
    Matrix,
    Vector
)
from prosthestim.filter_model import (
    Estimator,
    GaussianBelief,
    Innovation,
    ProcessModel,
    check_health,
    check_noise,
    discrete_transition,
    make_innovation,
    measurement_matrix,
    solve_gain,
    symmetrize
)
from prosthestim.sensors import (
    SensorFrame
)


DISCRETIZATIONS = ('expm', 'rk4')


@dataclass(frozen=True)
class LinearModel:
    """Time-invariant linear model at a fixed lever

    Attributes:
        process: Process model, gives the plant and :math:`Q`
        r_cop: COP lever
        discretization: ``expm`` (exact) or ``rk4``
    """

    process: ProcessModel = field(default_factory=ProcessModel)
    r_cop: float = 0.05
    discretization: str = 'expm'

    def __post_init__(self):
        if self.discretization not in DISCRETIZATIONS:
            raise NotImplementedError(
                f'Unknown discretization {self.discretization}'
            )

    @property
    def transition_matrix(self) -> Matrix:
        """Returns :math:`\\Phi`"""
        return discrete_transition(
            self.process.plant, float(self.r_cop), self.discretization
        )


def kf_predict(
        belief: GaussianBelief,
        transition_matrix: Matrix,
        process_noise: Matrix) -> GaussianBelief:
    """Time update"""
    mean = transition_matrix @ belief.mean
    cov = symmetrize(
        transition_matrix @ belief.cov @ transition_matrix.T + process_noise
    )
    return check_health(GaussianBelief(mean, cov), 'kf predict')


def linear_correct(
        pred: GaussianBelief,
        observed: Vector,
        h_matrix: Matrix,
        offset: Vector,
        noise_cov: Matrix,
        channels: ChannelSet,
        context: str = 'kf update') -> Tuple[GaussianBelief, Innovation]:
    """Measurement update of an affine measurement
    :math:`y = H x + c + v`

    Raises:
        SingularInnovationError: If :math:`S` is singular
    """
    innovation_cov = symmetrize(h_matrix @ pred.cov @ h_matrix.T + noise_cov)
    cross_cov = pred.cov @ h_matrix.T
    gain = solve_gain(cross_cov, innovation_cov)
    residual = observed - (h_matrix @ pred.mean + offset)
    mean = pred.mean + gain @ residual
    cov = symmetrize(pred.cov - gain @ innovation_cov @ gain.T)
    posterior = check_health(GaussianBelief(mean, cov), context)
    return posterior, make_innovation(channels, residual, innovation_cov)


def kf_update(
        pred: GaussianBelief,
        frame: SensorFrame,
        noise_cov: Matrix,
        model: LinearModel,
        channels: Optional[ChannelSet] = None) -> GaussianBelief:
    """Measurement update on the frame's present channels

    Raises:
        DimensionMismatchError: If ``noise_cov`` does not match the channels
        SingularInnovationError: If :math:`S` is singular
    """
    channels = frame.channels() if channels is None else channels
    noise_cov = check_noise(noise_cov, channels)
    h_matrix, offset = measurement_matrix(channels, model.process.plant)
    posterior, _ = linear_correct(
        pred, frame.measurement(channels), h_matrix, offset, noise_cov,
        channels
    )
    return posterior


def kf_step(
        belief: GaussianBelief,
        frame: SensorFrame,
        model: LinearModel,
        noise_cov: Matrix) -> GaussianBelief:
    """One predict-update cycle of the linear filter"""
    pred = kf_predict(
        belief, model.transition_matrix, model.process.process_noise
    )
    return kf_update(pred, frame, noise_cov, model)


class KalmanFilter(Estimator):
    """Stateful linear Kalman filter

    The transition matrix is rebuilt, through a cache, for the lever of every
    step.

    Args:
        model: Process model
        noise_cov: Measurement covariance over (gyro, accel, force)
        discretization: ``expm`` or ``rk4``
    """

    name = 'kf'

    def __init__(self, model: ProcessModel, noise_cov: Matrix,
                 discretization: str = 'expm'):
        super().__init__(model, noise_cov)
        if discretization not in DISCRETIZATIONS:
            raise NotImplementedError(
                f'Unknown discretization {discretization}'
            )
        self.discretization = discretization

    def predict(self, r_cop: float,
                process_noise: Optional[Matrix] = None) -> GaussianBelief:
        noise = self.model.process_noise if process_noise is None \
            else process_noise
        transition_matrix = discrete_transition(
            self.model.plant, float(r_cop), self.discretization
        )
        return self._predicted(
            kf_predict(self.belief, transition_matrix, noise)
        )

    def update(self, frame: SensorFrame,
               channels: Optional[ChannelSet] = None,
               noise_cov: Optional[Matrix] = None,
               measurement: Optional[Vector] = None) -> GaussianBelief:
        channels = frame.channels() if channels is None else channels
        if not channels:
            return self.belief
        if noise_cov is None:
            noise_cov = self.channel_noise(channels)
        noise_cov = check_noise(noise_cov, channels)
        h_matrix, offset = measurement_matrix(channels, self.model.plant)
        observed = frame.measurement(channels) if measurement is None \
            else np.asarray(measurement, dtype=float)
        self.belief, self.innovation = linear_correct(
            self.belief, observed, h_matrix, offset, noise_cov, channels
        )
        return self.belief
