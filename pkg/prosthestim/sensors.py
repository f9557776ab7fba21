"""Emulated IMU and force-plate measurements

A :class:`SensorStream` is obtained by corrupting a
:class:`~prosthestim.plant.GroundTruthTrace` with zero-mean Gaussian noise:

.. math::

    \\omega = \\dot{\\theta} + \\nu_\\omega, \\qquad
    \\ddot{z}_m = \\ddot{z} + \\nu_a, \\qquad
    F_{z,m} = \\left[ F_{\\mathrm{GRF}} + \\nu_f \\right]_{+}

Every channel draws from its own named substream of the noise seed, so that
changing one standard deviation does not alter the noise of the others. The
force plate can be marked absent, either over phase intervals of every cycle,
or at random per sample.
"""

from dataclasses import (
    dataclass,
    fields
)
from math import (
    isfinite
)
from typing import (
    Iterator,
    Optional,
    Sequence
)

import numpy as np
import pandas as pd

from prosthestim.common import (
    ChannelSet,
    FieldError,
    Interval,
    Matrix,
    require_same_length
)
from prosthestim.plant import (
    GroundTruthTrace
)
from prosthestim.random_streams import (
    substream
)


MEASUREMENT_CHANNELS: ChannelSet = ('gyro', 'accel', 'force')
"""Channels fused by the filters, in measurement-vector order"""

SENSOR_COLUMNS = ('t', 'omega', 'z_ddot', 'f_z', 'knee_angle')


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations of the additive sensor noise

    Attributes:
        sigma_gyro: Gyroscope noise, rad/s
        sigma_accel: Vertical accelerometer noise, :math:`m/s^2`
        sigma_force: Force plate noise, N
        sigma_knee: Knee encoder noise, rad
        seed: Seed of the noise substreams
    """

    sigma_gyro: float = 0.02
    sigma_accel: float = 0.2
    sigma_force: float = 10.0
    sigma_knee: float = 0.01
    seed: int = 0

    def __post_init__(self):
        for spec in fields(self):
            if spec.name == 'seed':
                continue
            value = getattr(self, spec.name)
            if not isfinite(value):
                raise FieldError(spec.name, 'must be finite')
            if value < 0:
                raise FieldError(spec.name, 'must be >= 0')
        if self.seed < 0:
            raise FieldError('seed', 'must be >= 0')

    def sigma(self, channel: str) -> float:
        """Returns the standard deviation of a measurement channel

        Raises:
            NotImplementedError: If the channel is unknown
        """
        if channel == 'gyro':
            return self.sigma_gyro
        if channel == 'accel':
            return self.sigma_accel
        if channel == 'force':
            return self.sigma_force
        raise NotImplementedError(f'Unknown channel {channel}')


@dataclass(frozen=True)
class SensorFrame:
    """One sample of the sensor stream

    ``None`` marks an absent channel.
    """

    t: float
    omega: float
    z_ddot_meas: float
    f_z_meas: Optional[float] = None
    knee_angle_meas: Optional[float] = None

    @property
    def force_present(self) -> bool:
        """Whether the force plate delivered a sample"""
        return self.f_z_meas is not None

    def channels(self) -> ChannelSet:
        """Returns the present measurement channels, in
        :data:`MEASUREMENT_CHANNELS` order"""
        if self.force_present:
            return MEASUREMENT_CHANNELS
        return MEASUREMENT_CHANNELS[:2]

    def measurement(self, channels: Optional[ChannelSet] = None) -> np.ndarray:
        """Returns the measurement vector restricted to ``channels``

        Raises:
            ValueError: If a requested channel is absent
        """
        channels = self.channels() if channels is None else channels
        values = []
        for channel in channels:
            if channel == 'gyro':
                values.append(self.omega)
            elif channel == 'accel':
                values.append(self.z_ddot_meas)
            elif channel == 'force':
                if self.f_z_meas is None:
                    raise ValueError(f'Channel "force" absent at t={self.t}')
                values.append(self.f_z_meas)
            else:
                raise NotImplementedError(f'Unknown channel {channel}')
        return np.array(values, dtype=float)


def _optional(value: float) -> Optional[float]:
    return None if np.isnan(value) else float(value)


class SensorStream:
    """Columnar sequence of :class:`SensorFrame`

    Absent samples are stored as NaN. Indexing and iteration yield
    :class:`SensorFrame` objects.

    Args:
        t: Sample times, non-decreasing
        omega: Gyroscope samples
        z_ddot: Accelerometer samples
        f_z: Force plate samples, NaN where absent
        knee_angle: Knee encoder samples, NaN where absent

    Raises:
        ValueError: If the columns differ in length or time decreases
    """

    def __init__(
            self,
            t: Sequence[float],
            omega: Sequence[float],
            z_ddot: Sequence[float],
            f_z: Sequence[float],
            knee_angle: Optional[Sequence[float]] = None):
        if knee_angle is None:
            knee_angle = np.full(len(t), np.nan)
        require_same_length(
            t=t, omega=omega, z_ddot=z_ddot, f_z=f_z, knee_angle=knee_angle
        )
        self.t = np.array(t, dtype=float)
        self.omega = np.array(omega, dtype=float)
        self.z_ddot = np.array(z_ddot, dtype=float)
        self.f_z = np.array(f_z, dtype=float)
        self.knee_angle = np.array(knee_angle, dtype=float)
        for array in (self.t, self.omega, self.z_ddot, self.f_z,
                      self.knee_angle):
            array.setflags(write=False)
        if np.any(np.diff(self.t) < 0):
            raise ValueError('Sample times must be non-decreasing')
        if not (np.all(np.isfinite(self.omega)) and
                np.all(np.isfinite(self.z_ddot))):
            raise ValueError('Gyroscope and accelerometer are always present')
        if np.any(self.f_z < 0):
            raise ValueError('Force plate samples must be >= 0')

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, index: int) -> SensorFrame:
        return SensorFrame(
            t=float(self.t[index]),
            omega=float(self.omega[index]),
            z_ddot_meas=float(self.z_ddot[index]),
            f_z_meas=_optional(self.f_z[index]),
            knee_angle_meas=_optional(self.knee_angle[index])
        )

    def __iter__(self) -> Iterator[SensorFrame]:
        for index in range(len(self)):
            yield self[index]

    @property
    def force_present(self) -> np.ndarray:
        """Boolean mask of the samples carrying a force plate value"""
        return ~np.isnan(self.f_z)

    def to_frame(self) -> pd.DataFrame:
        """Returns the stream as a :class:`pandas.DataFrame`"""
        return pd.DataFrame({
            't': self.t,
            'omega': self.omega,
            'z_ddot': self.z_ddot,
            'f_z': self.f_z,
            'knee_angle': self.knee_angle,
        })

    def to_csv(self, path) -> None:
        """Writes ``t,omega,z_ddot,f_z,knee_angle`` with ``NA`` for absent
        samples"""
        self.to_frame().to_csv(
            path, index=False, na_rep='NA', lineterminator='\n'
        )

    @staticmethod
    def from_csv(path) -> 'SensorStream':
        """Reads a stream written by :meth:`to_csv`

        Raises:
            ValueError: If a column is missing
        """
        frame = pd.read_csv(path, na_values=['NA'], keep_default_na=False)
        missing = [name for name in SENSOR_COLUMNS
                   if name not in frame.columns]
        if missing:
            raise ValueError(f'{path}: missing columns {missing}')
        return SensorStream(
            t=frame['t'].to_numpy(dtype=float),
            omega=frame['omega'].to_numpy(dtype=float),
            z_ddot=frame['z_ddot'].to_numpy(dtype=float),
            f_z=frame['f_z'].to_numpy(dtype=float),
            knee_angle=frame['knee_angle'].to_numpy(dtype=float)
        )


def in_intervals(phase: np.ndarray,
                 intervals: Sequence[Interval]) -> np.ndarray:
    """Returns the mask of phases within any half-open interval
    :math:`[a, b)`

    Intervals are expressed in cycle phase; ``(0, 1)`` covers a whole cycle.

    Raises:
        ValueError: If an interval is empty or outside :math:`[0, 1]`
    """
    mask = np.zeros(np.shape(phase), dtype=bool)
    for start, end in intervals:
        if not 0 <= start < end <= 1:
            raise FieldError(
                'force_dropout', f'invalid phase interval ({start}, {end})'
            )
        mask |= (phase >= start) & (phase < end)
    return mask


def corrupt_trace(
        truth: GroundTruthTrace,
        noise: NoiseSpec,
        force_dropout: Sequence[Interval] = (),
        dropout_probability: float = 0.0) -> SensorStream:
    """Produces the sensor stream of a ground-truth trace

    Args:
        truth: Ground truth, non-empty
        noise: Noise standard deviations and seed
        force_dropout: Phase intervals during which the force plate is absent
        dropout_probability: Probability that a force sample is absent,
            drawn independently per sample

    Raises:
        ValueError: If the trace is empty or the dropout arguments are invalid
    """
    n_samples = len(truth)
    if n_samples == 0:
        raise ValueError('Cannot corrupt an empty trace')
    if not 0 <= dropout_probability <= 1:
        raise FieldError('dropout_probability', 'must lie in [0, 1]')

    def draw(channel: str, sigma: float) -> np.ndarray:
        rng = substream(noise.seed, 'sensors', channel)
        return sigma * rng.standard_normal(n_samples)

    omega = truth.theta_dot + draw('gyro', noise.sigma_gyro)
    z_ddot = truth.z_ddot + draw('accel', noise.sigma_accel)
    f_z = np.maximum(truth.f_grf + draw('force', noise.sigma_force), 0.0)
    knee_angle = truth.knee_angle + draw('knee', noise.sigma_knee)

    absent = in_intervals(truth.phase, force_dropout)
    if dropout_probability > 0:
        rng = substream(noise.seed, 'sensors', 'dropout')
        absent |= rng.random(n_samples) < dropout_probability
    f_z = np.where(absent, np.nan, f_z)

    return SensorStream(
        t=truth.t, omega=omega, z_ddot=z_ddot, f_z=f_z, knee_angle=knee_angle
    )


def noise_covariance(
        noise: NoiseSpec,
        channels: ChannelSet = MEASUREMENT_CHANNELS) -> Matrix:
    """Returns the diagonal measurement covariance of ``channels``

    A frame's present channels are given by :meth:`SensorFrame.channels`.
    """
    return np.diag([noise.sigma(channel) ** 2 for channel in channels])
