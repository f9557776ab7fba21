"""Implementation of the unscented Kalman filter

Given a belief :math:`(\\hat{x}, P)` of dimension :math:`n`, the filter
represents it by :math:`2n + 1` sigma points

.. math::

    \\chi_0 = \\hat{x}, \\qquad
    \\chi_i = \\hat{x} + \\left[ \\sqrt{(n + \\lambda) P} \\right]_i, \\qquad
    \\chi_{i+n} = \\hat{x} - \\left[ \\sqrt{(n + \\lambda) P} \\right]_i

where the square root is the lower Cholesky factor, with weights
:math:`W_0^{(m)} = \\lambda / (n + \\lambda)`,
:math:`W_0^{(c)} = W_0^{(m)} + 1 - \\alpha^2 + \\beta` and
:math:`W_i^{(m)} = W_i^{(c)} = 1 / (2 (n + \\lambda))`. The points are
propagated through the plant and mapped through the measurement function;
weighted moments of the images give the prediction and the gain.

See also:
    `Wikipedia page <https://en.wikipedia.org/wiki/Kalman_filter#Unscented_Kalman_filter>`_
"""

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
    UkfParams,
    check_health,
    check_noise,
    cholesky_lower,
    make_innovation,
    measure,
    solve_gain,
    symmetrize,
    transition
)
from prosthestim.sensors import (
    SensorFrame
)


def unscented_weights(n: int, ukf: UkfParams) -> Tuple[Vector, Vector]:
    """Returns the mean and covariance weights of ``2n + 1`` points
    """
    lambda_ = ukf.lambda_(n)
    weight = 1.0 / (2.0 * (n + lambda_))
    mean_weights = np.full(2 * n + 1, weight)
    cov_weights = np.full(2 * n + 1, weight)
    mean_weights[0] = lambda_ / (n + lambda_)
    cov_weights[0] = mean_weights[0] + (1.0 - ukf.alpha ** 2 + ukf.beta)
    return mean_weights, cov_weights


def sigma_points(
        belief: GaussianBelief,
        ukf: UkfParams) -> Tuple[np.ndarray, Vector, Vector]:
    """Returns the sigma points, as rows, with their mean and covariance
    weights

    Raises:
        CovarianceNotPSDError: If the covariance has no Cholesky factor
    """
    n = len(belief.mean)
    lambda_ = ukf.lambda_(n)
    root = np.sqrt(n + lambda_) * cholesky_lower(belief.cov, 'sigma points')
    points = np.empty((2 * n + 1, n))
    points[0] = belief.mean
    points[1:n + 1] = belief.mean + root.T
    points[n + 1:] = belief.mean - root.T
    mean_weights, cov_weights = unscented_weights(n, ukf)
    return points, mean_weights, cov_weights


def _moments(images: np.ndarray,
             mean_weights: Vector) -> Tuple[Vector, np.ndarray]:
    """Weighted mean of the images, and their deviations from it

    The mean is accumulated relative to the centre image, which keeps the
    large centre weight of small spreads from cancelling catastrophically.
    """
    offsets = images[1:] - images[0]
    mean = images[0] + mean_weights[1:] @ offsets
    return mean, images - mean


def unscented_transform(
        points: np.ndarray,
        mean_weights: Vector,
        cov_weights: Vector) -> Tuple[Vector, Matrix]:
    """Weighted mean and covariance of transformed sigma points"""
    mean, deviations = _moments(points, mean_weights)
    cov = (deviations * cov_weights[:, None]).T @ deviations
    return mean, symmetrize(cov)


def ukf_predict(
        belief: GaussianBelief,
        r_cop: float,
        model: ProcessModel,
        ukf: UkfParams,
        process_noise: Optional[Matrix] = None) -> GaussianBelief:
    """Time update

    Each sigma point is advanced by one plant step driven by
    :math:`\\tau = r F_z` of that point; :math:`F_z` follows a random walk.

    Args:
        belief: Prior belief
        r_cop: COP lever held over the step
        model: Process model
        ukf: Sigma-point parameters
        process_noise: Overrides :math:`Q` of the model
    """
    points, mean_weights, cov_weights = sigma_points(belief, ukf)
    images = transition(points, r_cop, model)
    mean, cov = unscented_transform(images, mean_weights, cov_weights)
    noise = model.process_noise if process_noise is None else process_noise
    predicted = GaussianBelief(mean, symmetrize(cov + noise))
    return check_health(predicted, 'ukf predict')


def ukf_correct(
        pred: GaussianBelief,
        frame: SensorFrame,
        noise_cov: Matrix,
        ukf: UkfParams,
        model: ProcessModel,
        channels: Optional[ChannelSet] = None,
        measurement: Optional[Vector] = None
) -> Tuple[GaussianBelief, Innovation]:
    """Measurement update, returning the innovation as well

    Args:
        pred: Predicted belief
        frame: Sensor frame
        noise_cov: Measurement covariance restricted to ``channels``
        ukf: Sigma-point parameters
        model: Process model, provides the body mass of :math:`h`
        channels: Fused channels, the frame's present channels by default
        measurement: Overrides the measurement vector read from the frame

    Raises:
        DimensionMismatchError: If ``noise_cov`` does not match the channels
        SingularInnovationError: If :math:`P_{yy}` is singular
    """
    channels = frame.channels() if channels is None else channels
    noise_cov = check_noise(noise_cov, channels)
    observed = frame.measurement(channels) if measurement is None \
        else np.asarray(measurement, dtype=float)

    points, mean_weights, cov_weights = sigma_points(pred, ukf)
    images = measure(points, channels, model.plant)
    y_mean, y_dev = _moments(images, mean_weights)
    _, x_dev = _moments(points, mean_weights)

    innovation_cov = symmetrize(
        (y_dev * cov_weights[:, None]).T @ y_dev + noise_cov
    )
    cross_cov = (x_dev * cov_weights[:, None]).T @ y_dev
    gain = solve_gain(cross_cov, innovation_cov)
    residual = observed - y_mean

    mean = pred.mean + gain @ residual
    cov = symmetrize(pred.cov - gain @ innovation_cov @ gain.T)
    posterior = check_health(GaussianBelief(mean, cov), 'ukf update')
    return posterior, make_innovation(channels, residual, innovation_cov)


def ukf_update(
        pred: GaussianBelief,
        frame: SensorFrame,
        noise_cov: Matrix,
        ukf: UkfParams,
        model: ProcessModel,
        channels: Optional[ChannelSet] = None) -> GaussianBelief:
    """Measurement update, see :func:`ukf_correct`"""
    posterior, _ = ukf_correct(pred, frame, noise_cov, ukf, model, channels)
    return posterior


class UnscentedKalmanFilter(Estimator):
    """Stateful unscented Kalman filter

    Args:
        model: Process model
        noise_cov: Measurement covariance over (gyro, accel, force)
        ukf: Sigma-point parameters
    """

    name = 'ukf'

    def __init__(self, model: ProcessModel, noise_cov: Matrix,
                 ukf: UkfParams = UkfParams()):
        super().__init__(model, noise_cov)
        self.ukf = ukf

    def predict(self, r_cop: float,
                process_noise: Optional[Matrix] = None) -> GaussianBelief:
        return self._predicted(ukf_predict(
            self.belief, r_cop, self.model, self.ukf, process_noise
        ))

    def update(self, frame: SensorFrame,
               channels: Optional[ChannelSet] = None,
               noise_cov: Optional[Matrix] = None,
               measurement: Optional[Vector] = None) -> GaussianBelief:
        channels = frame.channels() if channels is None else channels
        if not channels:
            return self.belief
        if noise_cov is None:
            noise_cov = self.channel_noise(channels)
        self.belief, self.innovation = ukf_correct(
            self.belief, frame, noise_cov, self.ukf, self.model, channels,
            measurement
        )
        return self.belief
