# pylint: disable=unused-import

"""Meta module for filters

Re-exports the three model-based estimators and drives any of them over a
sensor stream::

    estimator = make_estimator('ukf', ProcessModel(), noise_covariance(noise))
    trace = run_estimator(estimator, stream, levers)
    trace.to_csv('ukf.csv')
"""

from dataclasses import (
    dataclass
)
from typing import (
    Optional,
    Sequence,
    Tuple
)

import numpy as np
import pandas as pd

from prosthestim.common import (
    Matrix,
    require_same_length
)
from prosthestim.filter_extended import ExtendedKalmanFilter, ekf_step
from prosthestim.filter_kalman import KalmanFilter, LinearModel, kf_step
from prosthestim.filter_model import (
    Estimator,
    GaussianBelief,
    ProcessModel,
    UkfParams,
    initial_belief
)
from prosthestim.filter_unscented import (
    UnscentedKalmanFilter,
    sigma_points,
    ukf_predict,
    ukf_update
)
from prosthestim.plant import (
    GaitProfile,
    cycle_phase
)
from prosthestim.sensors import (
    SensorStream
)


FILTER_KINDS = ('kf', 'ekf', 'ukf')

FILTER_TRACE_COLUMNS = (
    't',
    'theta_hat',
    'theta_dot_hat',
    'f_z_hat',
    'p11',
    'p22',
    'p33',
)


def make_estimator(
        kind: str,
        model: ProcessModel,
        noise_cov: Matrix,
        ukf: UkfParams = UkfParams(),
        discretization: str = 'expm') -> Estimator:
    """Builds an estimator by name

    Raises:
        NotImplementedError: If the kind is unknown
    """
    if kind == 'kf':
        return KalmanFilter(model, noise_cov, discretization)
    if kind == 'ekf':
        return ExtendedKalmanFilter(model, noise_cov)
    if kind == 'ukf':
        return UnscentedKalmanFilter(model, noise_cov, ukf)
    raise NotImplementedError(f'Unknown filter kind {kind}')


def nominal_levers(
        profile: GaitProfile,
        t: Sequence[float],
        cycle_duration: Optional[float] = None) -> np.ndarray:
    """COP lever of the nominal profile at every sample time

    Args:
        profile: Gait profile of the run
        t: Sample times
        cycle_duration: Cycle duration as simulated, defaults to the
            profile's
    """
    duration = profile.cycle_duration if cycle_duration is None \
        else cycle_duration
    return profile.cop_lever(cycle_phase(t, duration))


@dataclass(frozen=True)
class FilterTrace:
    """Estimates of a whole run

    Attributes:
        t: Sample times
        mean: Posterior means, shape ``(T, 3)``
        cov_diag: Posterior variances, shape ``(T, 3)``
        nis: Normalized innovation squared per step, NaN without update
        dims: Measurement dimension per step
    """

    t: np.ndarray
    mean: np.ndarray
    cov_diag: np.ndarray
    nis: np.ndarray
    dims: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    @property
    def theta(self) -> np.ndarray:
        """Estimated angle series"""
        return self.mean[:, 0]

    @property
    def theta_dot(self) -> np.ndarray:
        """Estimated angular velocity series"""
        return self.mean[:, 1]

    @property
    def f_z(self) -> np.ndarray:
        """Estimated vertical GRF series"""
        return self.mean[:, 2]

    def mean_nis(self) -> Tuple[float, float]:
        """Returns the average NIS and the average measurement dimension
        over the steps that were updated"""
        updated = ~np.isnan(self.nis)
        return (float(np.mean(self.nis[updated])),
                float(np.mean(self.dims[updated])))

    def to_frame(self) -> pd.DataFrame:
        """Returns the trace in the CSV layout"""
        return pd.DataFrame({
            't': self.t,
            'theta_hat': self.mean[:, 0],
            'theta_dot_hat': self.mean[:, 1],
            'f_z_hat': self.mean[:, 2],
            'p11': self.cov_diag[:, 0],
            'p22': self.cov_diag[:, 1],
            'p33': self.cov_diag[:, 2],
        })

    def to_csv(self, path) -> None:
        """Writes ``t,theta_hat,theta_dot_hat,f_z_hat,p11,p22,p33``"""
        self.to_frame().to_csv(path, index=False, lineterminator='\n')


class TraceRecorder:
    """Accumulates the belief of every step into a :class:`FilterTrace`
    """

    def __init__(self, n_samples: int):
        self.t = np.empty(n_samples)
        self.mean = np.empty((n_samples, 3))
        self.cov_diag = np.empty((n_samples, 3))
        self.nis = np.full(n_samples, np.nan)
        self.dims = np.zeros(n_samples, dtype=int)

    def record(self, index: int, t: float, estimator: Estimator,
               updated: bool = True) -> None:
        """Stores the current belief of ``estimator`` at ``index``"""
        belief = estimator.belief
        self.t[index] = t
        self.mean[index] = belief.mean
        self.cov_diag[index] = np.diag(belief.cov)
        if updated and estimator.innovation is not None:
            self.nis[index] = estimator.innovation.nis
            self.dims[index] = len(estimator.innovation.channels)

    def trace(self) -> FilterTrace:
        """Returns the recorded trace"""
        return FilterTrace(self.t, self.mean, self.cov_diag, self.nis,
                           self.dims)


def run_estimator(
        estimator: Estimator,
        stream: SensorStream,
        levers: Sequence[float],
        initial: Optional[GaussianBelief] = None) -> FilterTrace:
    """Runs an estimator over a whole stream

    The first frame initializes the belief (see
    :func:`~prosthestim.filter_model.initial_belief`) and is then used as a
    measurement; every later frame is preceded by a prediction driven by the
    lever of the previous frame.

    Args:
        estimator: Estimator, re-initialized by this call
        stream: Sensor stream
        levers: COP lever of every frame
        initial: Initial belief, guessed from the first frame by default

    Raises:
        DimensionMismatchError: If ``levers`` and ``stream`` differ in length
    """
    n_samples = require_same_length(stream=stream, levers=levers)
    levers = np.asarray(levers, dtype=float)
    recorder = TraceRecorder(n_samples)
    for index, frame in enumerate(stream):
        if index == 0:
            start = initial if initial is not None else initial_belief(
                frame, float(levers[0]), estimator.model.plant
            )
            estimator.initialize(start)
            estimator.update(frame)
        else:
            estimator.step(frame, float(levers[index - 1]))
        recorder.record(index, frame.t, estimator)
    return recorder.trace()
