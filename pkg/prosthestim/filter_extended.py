"""Implementation of the extended Kalman filter

The mean is propagated through the Runge-Kutta transition :math:`f`, the
covariance through its Jacobian :math:`F = \\partial f / \\partial x`,
obtained by differentiating the one-step map stage by stage (see
:func:`~prosthestim.filter_model.transition_jacobian`). The measurement
function is affine, so the update is the linear one.

See also:
    `Wikipedia page <https://en.wikipedia.org/wiki/Extended_Kalman_filter>`_
"""

from typing import (
    Callable,
    Optional
)

import numpy as np

from prosthestim.common import (
    ChannelSet,
    Matrix,
    Vector
)
from prosthestim.filter_kalman import (
    linear_correct
)
from prosthestim.filter_model import (
    Estimator,
    GaussianBelief,
    ProcessModel,
    check_health,
    check_noise,
    measurement_matrix,
    symmetrize,
    transition,
    transition_jacobian
)
from prosthestim.sensors import (
    SensorFrame
)


def numerical_jacobian(
        function: Callable[[Vector], Vector],
        point: Vector,
        epsilon: float = 1e-6) -> Matrix:
    """Central finite-difference Jacobian of ``function`` at ``point``
    """
    point = np.asarray(point, dtype=float)
    columns = []
    for index in range(len(point)):
        delta = np.zeros_like(point)
        delta[index] = epsilon
        columns.append(
            (function(point + delta) - function(point - delta)) /
            (2.0 * epsilon)
        )
    return np.stack(columns, axis=1)


def ekf_predict(
        belief: GaussianBelief,
        r_cop: float,
        model: ProcessModel,
        process_noise: Optional[Matrix] = None) -> GaussianBelief:
    """Time update through the Jacobian of the transition"""
    jacobian = transition_jacobian(model.plant, r_cop)
    noise = model.process_noise if process_noise is None else process_noise
    mean = transition(belief.mean, r_cop, model)
    cov = symmetrize(jacobian @ belief.cov @ jacobian.T + noise)
    return check_health(GaussianBelief(mean, cov), 'ekf predict')


def ekf_step(
        belief: GaussianBelief,
        frame: SensorFrame,
        model: ProcessModel,
        noise_cov: Matrix,
        r_cop: float) -> GaussianBelief:
    """One predict-update cycle

    Args:
        belief: Prior belief
        frame: Sensor frame of the new sample
        model: Process model
        noise_cov: Measurement covariance on the frame's present channels
        r_cop: COP lever held over the step
    """
    pred = ekf_predict(belief, r_cop, model)
    channels = frame.channels()
    noise_cov = check_noise(noise_cov, channels)
    h_matrix, offset = measurement_matrix(channels, model.plant)
    posterior, _ = linear_correct(
        pred, frame.measurement(channels), h_matrix, offset, noise_cov,
        channels, 'ekf update'
    )
    return posterior


class ExtendedKalmanFilter(Estimator):
    """Stateful extended Kalman filter

    Args:
        model: Process model
        noise_cov: Measurement covariance over (gyro, accel, force)
    """

    name = 'ekf'

    def predict(self, r_cop: float,
                process_noise: Optional[Matrix] = None) -> GaussianBelief:
        return self._predicted(
            ekf_predict(self.belief, r_cop, self.model, process_noise)
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
            self.belief, observed, h_matrix, offset, noise_cov, channels,
            'ekf update'
        )
        return self.belief
