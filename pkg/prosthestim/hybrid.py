"""Hybrid LSTM and unscented Kalman filter estimator

Every step of the hybrid estimator runs, in order:

1. *measurement augmentation*: when the force plate is absent, the LSTM
   prediction of :math:`F_z` from the trailing window of
   :math:`[\\omega, \\ddot{z}, r_{\\mathrm{COP}}]` replaces it, with an
   inflated noise variance;
2. *noise adaptation*: the measurement covariance of the gyroscope and force
   channels is rescaled by the ratio of the exponentially weighted mean of
   the squared residuals between measurement and LSTM prediction to its
   expected value, clamped to :math:`[0.25, 4]`;
3. the unscented time update;
4. the unscented measurement update;
5. *bound enforcement*: the posterior mean is clamped into the physical box
   and the variance of every clamped coordinate grows by the squared clamp
   distance.

With augmentation, adaptation and bounds disabled the estimator reduces to
:class:`~prosthestim.filter_unscented.UnscentedKalmanFilter`.
"""

import logging
from collections import (
    deque
)
from dataclasses import (
    dataclass
)
from math import (
    pi
)
from typing import (
    Deque,
    Dict,
    List,
    Optional,
    Sequence,
    Tuple
)

import numpy as np
import pandas as pd
from graphviz import (
    Digraph
)

from prosthestim.common import (
    ChannelSet,
    FieldError,
    Matrix,
    Vector,
    require_same_length
)
from prosthestim.filter_model import (
    GaussianBelief,
    ProcessModel,
    UkfParams,
    initial_belief
)
from prosthestim.filter_unscented import (
    UnscentedKalmanFilter
)
from prosthestim.filters import (
    FilterTrace,
    TraceRecorder
)
from prosthestim.neural_training import (
    TrainedModel
)
from prosthestim.sensors import (
    MEASUREMENT_CHANNELS,
    SensorFrame,
    SensorStream
)


logger = logging.getLogger(__name__)

HYBRID_INPUTS: ChannelSet = ('omega', 'z_ddot', 'r_cop')
"""Dataset channels fed to the network of the hybrid estimator"""

HYBRID_TARGETS: ChannelSet = ('theta_dot', 'f_z')
"""Dataset channels predicted one sample ahead"""

PLATE = 'plate'
LSTM = 'lstm'
NONE = 'none'

ADAPTED_CHANNELS = ('gyro', 'force')


@dataclass(frozen=True)
class HybridConfig:
    """Switches and constants of the hybrid estimator

    Attributes:
        theta_bounds: Admissible joint angle range, rad
        f_z_min: Lower bound of the vertical GRF, N
        bounds_enabled: Enforces the bounds on the posterior
        augment: Substitutes the LSTM prediction for absent force samples
        adapt_r: Rescales the measurement covariance
        adapt_q: Rescales the process covariance
        q_gain: Exponent applied to the scales when adapting :math:`Q`
        r_inflation: Variance factor of substituted force samples
        half_life: Half-life, in steps, of the residual averages
        scale_clamp: Range of the covariance scales
        history_k: Frames in the LSTM input buffer
        warm_start: Initializes the state from the first LSTM prediction
    """

    theta_bounds: Tuple[float, float] = (-pi / 2, pi / 2)
    f_z_min: float = 0.0
    bounds_enabled: bool = True
    augment: bool = True
    adapt_r: bool = True
    adapt_q: bool = False
    q_gain: float = 1.0
    r_inflation: float = 4.0
    half_life: float = 50.0
    scale_clamp: Tuple[float, float] = (0.25, 4.0)
    history_k: int = 50
    warm_start: bool = False

    def __post_init__(self):
        low, high = self.theta_bounds
        if not low < high:
            raise FieldError('theta_bounds', 'expects theta_min < theta_max')
        object.__setattr__(self, 'theta_bounds', (float(low), float(high)))
        if self.history_k < 1:
            raise FieldError('history_k', 'must be >= 1')
        if self.r_inflation <= 0:
            raise FieldError('r_inflation', 'must be > 0')
        if self.half_life <= 0:
            raise FieldError('half_life', 'must be > 0')
        if self.q_gain < 0:
            raise FieldError('q_gain', 'must be >= 0')
        low, high = self.scale_clamp
        if not 0 < low <= 1 <= high:
            raise FieldError('scale_clamp', 'expects 0 < low <= 1 <= high')
        object.__setattr__(self, 'scale_clamp', (float(low), float(high)))

    @property
    def ewma_weight(self) -> float:
        """Weight :math:`1 - 2^{-1/h}` of the newest squared residual"""
        return 1.0 - 2.0 ** (-1.0 / self.half_life)

    @property
    def reduces_to_ukf(self) -> bool:
        """Whether every hybrid stage is disabled"""
        return not (self.augment or self.adapt_r or self.adapt_q or
                    self.bounds_enabled)


@dataclass(frozen=True)
class AugmentedMeasurement:
    """Measurement actually fused at one step

    Attributes:
        base: Sensor frame
        f_z_source: ``plate``, ``lstm``, or ``none`` when the force channel
            is dropped
        channels: Fused channels
        value: Measurement vector on ``channels``
        r_effective: Measurement covariance on ``channels``
    """

    base: SensorFrame
    f_z_source: str
    channels: ChannelSet
    value: Vector
    r_effective: Matrix


class ResidualStatistics:
    """Exponentially weighted mean of squared residuals per channel

    Args:
        expected: Expected residual variance of every channel
        weight: Weight of the newest sample
    """

    def __init__(self, expected: Dict[str, float], weight: float):
        for channel, value in expected.items():
            if not value > 0:
                raise FieldError(f'expected.{channel}', 'must be > 0')
        self.expected = dict(expected)
        self.weight = weight
        self.mean = dict(expected)
        self.count = {channel: 0 for channel in expected}

    def update(self, channel: str, residual: float) -> None:
        """Folds one residual in"""
        self.mean[channel] += self.weight * (
            residual ** 2 - self.mean[channel]
        )
        self.count[channel] += 1

    def scale(self, channel: str, clamp: Tuple[float, float]) -> float:
        """Clamped ratio of the average to the expected squared residual"""
        ratio = self.mean[channel] / self.expected[channel]
        return float(np.clip(ratio, clamp[0], clamp[1]))


def adapt_noise(
        stats: ResidualStatistics,
        base_r: Matrix,
        base_q: Matrix,
        config: HybridConfig) -> Tuple[Matrix, Matrix, Dict[str, float]]:
    """Rescales the covariances from the residual statistics

    Args:
        stats: Residual statistics of the gyroscope and force channels
        base_r: Measurement covariance over (gyro, accel, force)
        base_q: Process covariance
        config: Hybrid configuration

    Returns:
        :math:`R_t`, :math:`Q_t` and the scales applied per channel
    """
    scales = {channel: 1.0 for channel in ADAPTED_CHANNELS}
    if config.adapt_r or config.adapt_q:
        scales = {channel: stats.scale(channel, config.scale_clamp)
                  for channel in ADAPTED_CHANNELS}
    r_t = np.array(base_r, dtype=float)
    q_t = np.array(base_q, dtype=float)
    if config.adapt_r:
        factors = np.ones(len(MEASUREMENT_CHANNELS))
        for channel in ADAPTED_CHANNELS:
            factors[MEASUREMENT_CHANNELS.index(channel)] = scales[channel]
        root = np.sqrt(factors)
        r_t = r_t * np.outer(root, root)
    if config.adapt_q:
        factors = np.array([1.0, scales['gyro'], scales['force']]) ** \
            config.q_gain
        root = np.sqrt(factors)
        q_t = q_t * np.outer(root, root)
    return r_t, q_t, scales


def augment_measurement(
        frame: SensorFrame,
        prediction: Optional[Vector],
        base_r: Matrix,
        config: HybridConfig) -> AugmentedMeasurement:
    """Fills an absent force sample with the LSTM prediction

    Args:
        frame: Sensor frame
        prediction: LSTM prediction of :math:`(\\dot{\\theta}, F_z)` for
            this frame, ``None`` while the history buffer is not full
        base_r: Measurement covariance over (gyro, accel, force)
        config: Hybrid configuration
    """
    if frame.force_present:
        channels = MEASUREMENT_CHANNELS
        source = PLATE
        value = frame.measurement(channels)
        r_effective = np.array(base_r, dtype=float)
    elif config.augment and prediction is not None:
        channels = MEASUREMENT_CHANNELS
        source = LSTM
        value = np.array([frame.omega, frame.z_ddot_meas,
                          float(prediction[1])])
        r_effective = np.array(base_r, dtype=float)
        r_effective[2, 2] *= config.r_inflation
    else:
        channels = MEASUREMENT_CHANNELS[:2]
        source = NONE
        value = frame.measurement(channels)
        r_effective = np.array(base_r, dtype=float)[:2, :2]
        if config.augment:
            logger.debug('Force channel dropped at t=%.4f, history not full',
                         frame.t)
    return AugmentedMeasurement(frame, source, channels, value, r_effective)


def enforce_bounds(
        belief: GaussianBelief,
        config: HybridConfig) -> Tuple[GaussianBelief, int]:
    """Projects the mean into the admissible box

    The variance of every clamped coordinate grows by the squared clamp
    distance.

    Returns:
        The projected belief and the number of clamped coordinates
    """
    lows = np.array([config.theta_bounds[0], -np.inf, config.f_z_min])
    highs = np.array([config.theta_bounds[1], np.inf, np.inf])
    clamped = np.clip(belief.mean, lows, highs)
    distance = clamped - belief.mean
    hits = int(np.count_nonzero(distance))
    if hits == 0:
        return belief, 0
    cov = belief.cov.copy()
    cov[np.diag_indices_from(cov)] += distance ** 2
    logger.debug('Projected posterior %s onto %s', belief.mean, clamped)
    return GaussianBelief(clamped, cov), hits


def hybrid_inputs(stream: SensorStream, levers: Sequence[float]) -> np.ndarray:
    """Network inputs :math:`[\\omega, \\ddot{z}, r_{\\mathrm{COP}}]` of every
    frame, shape ``(T, 3)``"""
    require_same_length(stream=stream, levers=levers)
    return np.stack([stream.omega, stream.z_ddot,
                     np.asarray(levers, dtype=float)], axis=1)


class HybridEstimator:
    """Stateful LSTM and unscented Kalman filter estimator

    Args:
        model: Process model
        noise_cov: Measurement covariance over (gyro, accel, force)
        ukf: Sigma-point parameters
        lstm: Network predicting :math:`(\\dot{\\theta}, F_z)` one sample
            ahead; augmentation and adaptation are inactive without it
        config: Hybrid configuration
    """

    name = 'lstm_ukf'

    def __init__(
            self,
            model: ProcessModel,
            noise_cov: Matrix,
            ukf: UkfParams = UkfParams(),
            lstm: Optional[TrainedModel] = None,
            config: HybridConfig = HybridConfig()):
        self.filter = UnscentedKalmanFilter(model, noise_cov, ukf)
        self.lstm = lstm
        self.config = config
        self.history: Deque[np.ndarray] = deque(maxlen=config.history_k)
        expected = {}
        for channel, target in zip(ADAPTED_CHANNELS, HYBRID_TARGETS):
            index = MEASUREMENT_CHANNELS.index(channel)
            network_mse = 0.0 if lstm is None else \
                lstm.val_mse.get(target, 0.0)
            expected[channel] = float(noise_cov[index, index]) + network_mse
        self.stats = ResidualStatistics(expected, config.ewma_weight)
        self.scales = {channel: 1.0 for channel in ADAPTED_CHANNELS}
        self.last_source = PLATE
        self.last_hits = 0

    @property
    def model(self) -> ProcessModel:
        """Process model of the underlying filter"""
        return self.filter.model

    @property
    def belief(self) -> Optional[GaussianBelief]:
        """Current belief"""
        return self.filter.belief

    @property
    def innovation(self):
        """Innovation of the last update"""
        return self.filter.innovation

    def initialize(self, belief: GaussianBelief) -> None:
        """Sets the belief and empties the history"""
        self.filter.initialize(belief)
        self.history.clear()

    def warm_start(self, belief: GaussianBelief,
                   first_row: np.ndarray) -> GaussianBelief:
        """Replaces :math:`\\dot{\\theta}` and :math:`F_z` of ``belief`` by
        the LSTM prediction of a window filled with the first frame"""
        if self.lstm is None:
            return belief
        window = np.repeat(first_row[None, :], self.config.history_k, axis=0)
        prediction = self.lstm.predict_windows(window[None])[0]
        mean = belief.mean.copy()
        mean[1] = prediction[0]
        mean[2] = max(self.config.f_z_min, prediction[1])
        return GaussianBelief(mean, belief.cov)

    def predict_next(self) -> Optional[Vector]:
        """LSTM prediction for the upcoming frame, ``None`` until the history
        is full"""
        if self.lstm is None or len(self.history) < self.config.history_k:
            return None
        window = np.array(self.history)[None]
        return self.lstm.predict_windows(window)[0]

    def _fold_residuals(self, frame: SensorFrame,
                        prediction: Optional[Vector]) -> None:
        if prediction is None:
            return
        self.stats.update('gyro', frame.omega - float(prediction[0]))
        if frame.force_present:
            self.stats.update('force', frame.f_z_meas - float(prediction[1]))

    def step(self,
             frame: SensorFrame,
             r_cop: Optional[float],
             lever_now: float,
             prediction: Optional[Vector] = None,
             use_prediction: bool = False) -> GaussianBelief:
        """Runs one hybrid step

        Args:
            frame: Sensor frame
            r_cop: Lever held over the prediction, ``None`` for the first
                frame (no time update)
            lever_now: Lever of ``frame``, appended to the history
            prediction: Precomputed LSTM prediction for this frame
            use_prediction: Uses ``prediction`` instead of evaluating the
                network on the history
        """
        if self.filter.belief is None:
            raise RuntimeError('hybrid estimator used before initialize()')
        if not use_prediction:
            prediction = self.predict_next()
        elif len(self.history) < self.config.history_k:
            prediction = None

        base_r = self.filter.noise_cov
        augmented = augment_measurement(frame, prediction, base_r,
                                        self.config)
        if self.config.adapt_r or self.config.adapt_q:
            self._fold_residuals(frame, prediction)
        r_t, q_t, self.scales = adapt_noise(
            self.stats, base_r, self.model.process_noise, self.config
        )
        r_effective = augmented.r_effective
        if self.config.adapt_r:
            index = [MEASUREMENT_CHANNELS.index(c) for c in augmented.channels]
            r_effective = r_t[np.ix_(index, index)]
            if augmented.f_z_source == LSTM:
                r_effective[2, 2] *= self.config.r_inflation

        if r_cop is not None:
            self.filter.predict(
                r_cop, q_t if self.config.adapt_q else None
            )
        self.filter.update(frame, augmented.channels, r_effective,
                           augmented.value)
        self.last_hits = 0
        if self.config.bounds_enabled:
            self.filter.belief, self.last_hits = enforce_bounds(
                self.filter.belief, self.config
            )
        self.last_source = augmented.f_z_source
        self.history.append(
            np.array([frame.omega, frame.z_ddot_meas, lever_now])
        )
        return self.filter.belief

    def draw(self, **kwargs) -> Digraph:
        """Renders the per-step pipeline using graphviz, disabled stages
        dashed

        Returns:
            A :class:`graphviz.Digraph` object.
        """
        graph = Digraph(**kwargs)
        enabled = {
            'augment': self.config.augment and self.lstm is not None,
            'adapt': (self.config.adapt_r or self.config.adapt_q) and
            self.lstm is not None,
            'predict': True,
            'update': True,
            'bounds': self.config.bounds_enabled,
        }
        graph.node('frame', shape='point')
        graph.node('lstm', shape='ellipse',
                   style='solid' if self.lstm is not None else 'dashed')
        previous = 'frame'
        for stage, active in enabled.items():
            graph.node(stage, shape='box',
                       style='solid' if active else 'dashed')
            graph.edge(previous, stage)
            previous = stage
        graph.node('posterior', shape='box', peripheries='2')
        graph.edge(previous, 'posterior')
        graph.edge('lstm', 'augment', label='F_z')
        graph.edge('lstm', 'adapt', label='residuals')
        return graph


@dataclass(frozen=True)
class HybridTrace:
    """Filter trace of a hybrid run with its per-step diagnostics

    Attributes:
        filter_trace: Estimates and variances
        f_z_source: Source of the fused force sample per step
        r_scale_gyro: Measurement covariance scale of the gyroscope
        r_scale_force: Measurement covariance scale of the force channel
        bound_hits: Number of clamped coordinates per step
        history_full: Whether the history buffer was full at each step
    """

    filter_trace: FilterTrace
    f_z_source: np.ndarray
    r_scale_gyro: np.ndarray
    r_scale_force: np.ndarray
    bound_hits: np.ndarray
    history_full: np.ndarray

    def __len__(self) -> int:
        return len(self.filter_trace)

    @property
    def theta(self) -> np.ndarray:
        """Estimated angle series"""
        return self.filter_trace.theta

    @property
    def f_z(self) -> np.ndarray:
        """Estimated vertical GRF series"""
        return self.filter_trace.f_z

    def lstm_source_fraction(self) -> float:
        """Fraction of the force-absent frames with full history that used
        the LSTM; NaN when there is none"""
        absent = (self.f_z_source != PLATE) & self.history_full
        if not np.any(absent):
            return float('nan')
        return float(np.mean(self.f_z_source[absent] == LSTM))

    def to_frame(self) -> pd.DataFrame:
        """Returns the trace in the CSV layout"""
        frame = self.filter_trace.to_frame()
        frame['f_z_source'] = self.f_z_source
        frame['r_scale_gyro'] = self.r_scale_gyro
        frame['r_scale_force'] = self.r_scale_force
        frame['bound_hits'] = self.bound_hits
        return frame

    def to_csv(self, path) -> None:
        """Writes the filter trace columns followed by
        ``f_z_source,r_scale_gyro,r_scale_force,bound_hits``"""
        self.to_frame().to_csv(path, index=False, lineterminator='\n')


def run_hybrid(
        estimator: HybridEstimator,
        stream: SensorStream,
        levers: Sequence[float],
        initial: Optional[GaussianBelief] = None,
        batched: bool = True) -> HybridTrace:
    """Runs the hybrid estimator over a whole stream

    Args:
        estimator: Estimator, re-initialized by this call
        stream: Sensor stream
        levers: COP lever of every frame
        initial: Initial belief, guessed from the first frame by default
        batched: Evaluates the network on every window at once beforehand,
            instead of once per step
    """
    n_samples = require_same_length(stream=stream, levers=levers)
    levers = np.asarray(levers, dtype=float)
    inputs = hybrid_inputs(stream, levers)
    predictions = None
    if batched and estimator.lstm is not None:
        predictions = estimator.lstm.predict_series(inputs)

    recorder = TraceRecorder(n_samples)
    sources: List[str] = []
    scales = np.ones((n_samples, 2))
    hits = np.zeros(n_samples, dtype=int)
    full = np.zeros(n_samples, dtype=bool)
    for index, frame in enumerate(stream):
        full[index] = index >= estimator.config.history_k
        prediction = None
        if predictions is not None and index > 0:
            prediction = predictions[index - 1]
        if index == 0:
            start = initial if initial is not None else initial_belief(
                frame, float(levers[0]), estimator.model.plant
            )
            if estimator.config.warm_start:
                start = estimator.warm_start(start, inputs[0])
            estimator.initialize(start)
            estimator.step(frame, None, float(levers[0]), prediction,
                           predictions is not None)
        else:
            estimator.step(frame, float(levers[index - 1]),
                           float(levers[index]), prediction,
                           predictions is not None)
        recorder.record(index, frame.t, estimator)
        sources.append(estimator.last_source)
        scales[index] = [estimator.scales['gyro'], estimator.scales['force']]
        hits[index] = estimator.last_hits
    return HybridTrace(
        filter_trace=recorder.trace(),
        f_z_source=np.array(sources),
        r_scale_gyro=scales[:, 0],
        r_scale_force=scales[:, 1],
        bound_hits=hits,
        history_full=full
    )
