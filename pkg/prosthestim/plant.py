"""Single degree-of-freedom ankle plant

The ankle is a second-order rotational system driven by the external torque
of the vertical ground reaction force (GRF) acting at the centre of pressure
(COP):

.. math::

    I \\ddot{\\theta} + b \\dot{\\theta} + k \\theta = \\tau_{\\mathrm{ext}},
    \\qquad
    \\tau_{\\mathrm{ext}} = r_{\\mathrm{COP}} F_z,
    \\qquad
    F_z = m \\left[ g + \\ddot{z} \\right]_{+}

Sign convention: positive :math:`\\theta` is dorsiflexion, positive
:math:`r_{\\mathrm{COP}}` places the COP anterior to the joint.

The plant is integrated with the classical 4th-order Runge-Kutta scheme, the
torque being held constant over a step. A synthetic gait is produced by
evaluating a :class:`GaitProfile` per phase and feeding the resulting torque
through :func:`step`::

    params = PlantParams()
    profile = default_profile('walking', speed_kmh=2.0)
    trace = generate_gait(profile, n_cycles=3, params=params, seed=0)
    trace.to_csv('truth.csv')
"""

from dataclasses import (
    dataclass,
    field,
    fields
)
from math import (
    isfinite,
    pi
)
from typing import (
    Optional,
    Tuple,
    Union
)

import numpy as np
import pandas as pd

from prosthestim.common import (
    GRAVITY,
    FieldError,
    Matrix,
    SimulationDivergedError,
    require_finite
)
from prosthestim.random_streams import (
    substream
)


Number = Union[float, np.ndarray]

TASKS = ('walking', 'sitting', 'running')

TRACE_COLUMNS = (
    't',
    'theta',
    'theta_dot',
    'z_ddot',
    'r_cop',
    'f_grf',
    'tau_ext',
    'knee_angle',
)


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the simulated ankle

    Attributes:
        inertia: Moment of inertia of the foot segment, :math:`kg \\cdot m^2`
        damping: Viscous damping, :math:`N \\cdot m \\cdot s / rad`
        stiffness: Passive stiffness, :math:`N \\cdot m / rad`
        mass: Body mass, :math:`kg`
        dt: Integration step, :math:`s`
    """

    inertia: float = 0.0197
    damping: float = 4.0
    stiffness: float = 400.0
    mass: float = 70.0
    dt: float = 1e-3

    def __post_init__(self):
        for spec in fields(self):
            value = getattr(self, spec.name)
            if not isinstance(value, (int, float)) or not isfinite(value):
                raise FieldError(spec.name, f'must be finite, got {value!r}')
        if self.inertia <= 0:
            raise FieldError('inertia', 'must be > 0')
        if self.mass <= 0:
            raise FieldError('mass', 'must be > 0')
        if self.dt <= 0:
            raise FieldError('dt', 'must be > 0')
        if self.damping < 0:
            raise FieldError('damping', 'must be >= 0')
        if self.stiffness < 0:
            raise FieldError('stiffness', 'must be >= 0')

    @property
    def gravity(self) -> float:
        """Gravitational acceleration, fixed to 9.81 :math:`m/s^2`"""
        return GRAVITY


@dataclass(frozen=True)
class JointState:
    """Angle and angular velocity of the ankle

    Attributes:
        theta: Joint angle, rad
        theta_dot: Angular velocity, rad/s

    Raises:
        ValueError: If a field is not finite or the angle leaves
            :math:`[-\\pi, \\pi]`
    """

    theta: float
    theta_dot: float

    def __post_init__(self):
        require_finite(theta=self.theta, theta_dot=self.theta_dot)
        if abs(self.theta) > pi:
            raise FieldError('theta', 'must lie within [-pi, pi]')


def _derivative(theta, theta_dot, tau, params: PlantParams):
    """Right-hand side of the state equation, works on scalars and arrays
    """
    theta_ddot = (
        tau - params.damping * theta_dot - params.stiffness * theta
    ) / params.inertia
    return theta_dot, theta_ddot


def rk4(theta: Number, theta_dot: Number, tau: Number, params: PlantParams,
        dt: Optional[float] = None) -> Tuple[Number, Number]:
    """One classical Runge-Kutta step with zero-order hold on the torque

    Operates elementwise, so that a whole set of sigma points can be advanced
    at once. No validation is performed; use :func:`step` for checked
    integration.
    """
    h = params.dt if dt is None else dt
    k1_t, k1_w = _derivative(theta, theta_dot, tau, params)
    k2_t, k2_w = _derivative(
        theta + 0.5 * h * k1_t, theta_dot + 0.5 * h * k1_w, tau, params
    )
    k3_t, k3_w = _derivative(
        theta + 0.5 * h * k2_t, theta_dot + 0.5 * h * k2_w, tau, params
    )
    k4_t, k4_w = _derivative(
        theta + h * k3_t, theta_dot + h * k3_w, tau, params
    )
    theta_next = theta + h / 6.0 * (k1_t + 2.0 * k2_t + 2.0 * k3_t + k4_t)
    theta_dot_next = theta_dot + h / 6.0 * (
        k1_w + 2.0 * k2_w + 2.0 * k3_w + k4_w
    )
    return theta_next, theta_dot_next


def state_derivative(
        state: JointState,
        tau_ext: float,
        params: PlantParams) -> Tuple[float, float]:
    """Returns :math:`(\\dot{\\theta}, \\ddot{\\theta})` for the given state
    and external torque

    Raises:
        NonFiniteInputError: If ``tau_ext`` or a state component is not finite
    """
    require_finite(
        theta=state.theta, theta_dot=state.theta_dot, tau_ext=tau_ext
    )
    theta_dot, theta_ddot = _derivative(
        state.theta, state.theta_dot, tau_ext, params
    )
    return float(theta_dot), float(theta_ddot)


def step(
        state: JointState,
        tau_ext: float,
        params: PlantParams,
        step_index: int = 0) -> JointState:
    """Advances the plant by ``params.dt``

    Args:
        state: Current state
        tau_ext: External torque, held constant over the step
        params: Plant parameters
        step_index: Index reported if the simulation diverges

    Raises:
        SimulationDivergedError: If the new angle leaves :math:`[-\\pi, \\pi]`
    """
    require_finite(tau_ext=tau_ext)
    theta, theta_dot = rk4(state.theta, state.theta_dot, tau_ext, params)
    if not (isfinite(theta) and isfinite(theta_dot)) or abs(theta) > pi:
        raise SimulationDivergedError(step_index, theta)
    return JointState(float(theta), float(theta_dot))


def grf_from_accel(z_ddot: Number, params: PlantParams) -> Number:
    """Vertical GRF :math:`m (g + \\ddot{z})`, clamped at zero from below

    The clamp encodes the swing phase: the ground cannot pull on the foot.
    """
    require_finite(z_ddot=z_ddot)
    force = params.mass * (params.gravity + np.asarray(z_ddot, dtype=float))
    clamped = np.maximum(force, 0.0)
    if clamped.ndim == 0:
        return float(clamped)
    return clamped


def torque_from_grf(r_cop: Number, f_z: Number) -> Number:
    """External ankle torque :math:`r_{\\mathrm{COP}} F_z`

    Raises:
        ValueError: If ``f_z`` is negative
    """
    require_finite(r_cop=r_cop, f_z=f_z)
    if np.any(np.asarray(f_z) < 0):
        raise FieldError('f_z', 'vertical GRF must be >= 0')
    torque = np.asarray(r_cop, dtype=float) * np.asarray(f_z, dtype=float)
    if torque.ndim == 0:
        return float(torque)
    return torque


def output_vector(
        state: JointState,
        z_ddot: float,
        r_cop: float,
        params: PlantParams) -> Tuple[float, float, float, float]:
    """Composite output :math:`(\\theta, \\dot{\\theta}, F_{\\mathrm{GRF}},
    \\tau_{\\mathrm{ext}})`
    """
    require_finite(z_ddot=z_ddot, r_cop=r_cop)
    f_grf = grf_from_accel(z_ddot, params)
    tau_ext = torque_from_grf(r_cop, f_grf)
    return state.theta, state.theta_dot, f_grf, tau_ext


def continuous_matrices(params: PlantParams) -> Tuple[Matrix, Matrix]:
    """Returns the pair :math:`(A, B)` of
    :math:`\\dot{x} = A x + B \\tau_{\\mathrm{ext}}`, :math:`x = (\\theta,
    \\dot{\\theta})`
    """
    a_matrix = np.array([
        [0.0, 1.0],
        [-params.stiffness / params.inertia, -params.damping / params.inertia],
    ])
    b_matrix = np.array([[0.0], [1.0 / params.inertia]])
    return a_matrix, b_matrix


def output_matrices() -> Tuple[Matrix, Matrix]:
    """Returns the pair :math:`(C, D)` mapping
    :math:`(x, \\tau_{\\mathrm{ext}})`
    to the joint rows and the torque row of the composite output

    The GRF row is algebraic in :math:`\\ddot{z}` and has no state or torque
    dependence, hence a zero row in both matrices.
    """
    c_matrix = np.array([
        [1.0, 0.0],
        [0.0, 1.0],
        [0.0, 0.0],
        [0.0, 0.0],
    ])
    d_matrix = np.array([[0.0], [0.0], [0.0], [1.0]])
    return c_matrix, d_matrix


@dataclass(frozen=True)
class GaitSettings:
    """Shape parameters of the synthetic gait profiles

    Phases are normalized to :math:`[0, 1)`; within stance, ``s`` denotes the
    phase normalized to the stance interval.
    """

    walking_stance_fraction: float = 0.6
    walking_peak_ratio: float = 1.1
    walking_bump_centers: Tuple[float, float] = (0.3, 0.7)
    walking_bump_half_width: float = 0.3
    duration_slope: float = 1.9
    duration_offset: float = 0.35
    cop_heel: float = -0.05
    cop_toe: float = 0.15
    knee_max_deg: float = 60.0
    knee_phase_shift: float = 0.15
    sitting_period: float = 4.0
    sitting_load_sway: float = 0.05
    sitting_cop_mean: float = 0.05
    sitting_cop_sway: float = 0.01
    sitting_knee_deg: float = 90.0
    sitting_knee_sway_deg: float = 2.0
    running_cycle_duration: float = 0.7
    running_stance_fraction: float = 0.35
    running_peak_ratio: float = 2.2
    amplitude_variation: float = 0.05

    def __post_init__(self):
        for name in ('walking_stance_fraction', 'running_stance_fraction'):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise FieldError(name, 'must lie in (0, 1)')
        for name in ('walking_peak_ratio', 'running_peak_ratio',
                     'sitting_period', 'running_cycle_duration',
                     'walking_bump_half_width', 'duration_slope'):
            if getattr(self, name) <= 0:
                raise FieldError(name, 'must be > 0')
        if not 0 <= self.amplitude_variation < 1:
            raise FieldError('amplitude_variation', 'must lie in [0, 1)')
        if not 0 <= self.sitting_load_sway < 1:
            raise FieldError('sitting_load_sway', 'must lie in [0, 1)')
        if len(self.walking_bump_centers) != 2:
            raise FieldError('walking_bump_centers', 'expects two centers')


def _raised_cosine(s: np.ndarray, center: float, half_width: float):
    """Raised cosine bump of unit height supported on
    :math:`[c - w, c + w]`
    """
    distance = np.abs(s - center)
    bump = 0.5 * (1.0 + np.cos(np.pi * distance / half_width))
    return np.where(distance <= half_width, bump, 0.0)


@dataclass(frozen=True)
class GaitProfile:
    """Periodic driving signals of one task at one speed

    All shape functions take a phase (scalar or array) and are periodic with
    period 1.

    Attributes:
        task: One of ``walking``, ``sitting``, ``running``
        speed_kmh: Walking speed in km/h, within :math:`[0.5, 6]`
        cycle_duration: Duration of one cycle in seconds
        settings: Shape parameters
    """

    task: str
    speed_kmh: float
    cycle_duration: float
    settings: GaitSettings = field(default_factory=GaitSettings)

    def __post_init__(self):
        if self.task not in TASKS:
            raise NotImplementedError(f'Unknown task {self.task}')
        if not 0.5 <= self.speed_kmh <= 6.0:
            raise FieldError('speed_kmh', 'must lie in [0.5, 6]')
        if not self.cycle_duration > 0:
            raise FieldError('cycle_duration', 'must be > 0')

    def _stance_fraction(self) -> float:
        if self.task == 'running':
            return self.settings.running_stance_fraction
        return self.settings.walking_stance_fraction

    def load_fraction(self, phase: Number) -> np.ndarray:
        """Returns the vertical GRF in units of body weight :math:`m g`
        """
        phase = np.mod(np.asarray(phase, dtype=float), 1.0)
        settings = self.settings
        if self.task == 'sitting':
            return 1.0 + settings.sitting_load_sway * np.sin(2 * np.pi * phase)
        stance = self._stance_fraction()
        s = phase / stance
        if self.task == 'walking':
            first, second = settings.walking_bump_centers
            width = settings.walking_bump_half_width
            load = settings.walking_peak_ratio * (
                _raised_cosine(s, first, width) +
                _raised_cosine(s, second, width)
            )
        else:
            load = settings.running_peak_ratio * np.sin(np.pi * s) ** 2
        return np.where(phase < stance, load, 0.0)

    def cop_lever(self, phase: Number) -> np.ndarray:
        """Returns :math:`r_{\\mathrm{COP}}` in meters

        The COP sweeps linearly from heel to toe during stance and is reported
        as 0 while the foot is airborne.
        """
        phase = np.mod(np.asarray(phase, dtype=float), 1.0)
        settings = self.settings
        if self.task == 'sitting':
            return settings.sitting_cop_mean + \
                settings.sitting_cop_sway * np.sin(2 * np.pi * phase)
        stance = self._stance_fraction()
        s = phase / stance
        sweep = settings.cop_heel + (settings.cop_toe - settings.cop_heel) * s
        return np.where(phase < stance, sweep, 0.0)

    def knee_angle(self, phase: Number) -> np.ndarray:
        """Returns the knee flexion angle in radians
        """
        phase = np.mod(np.asarray(phase, dtype=float), 1.0)
        settings = self.settings
        if self.task == 'sitting':
            return np.deg2rad(
                settings.sitting_knee_deg +
                settings.sitting_knee_sway_deg * np.sin(2 * np.pi * phase)
            )
        half_range = 0.5 * np.deg2rad(settings.knee_max_deg)
        return half_range * (
            1.0 - np.cos(2 * np.pi * (phase - settings.knee_phase_shift))
        )


def cycle_duration_for(
        task: str,
        speed_kmh: float,
        settings: GaitSettings = GaitSettings()) -> float:
    """Cycle duration law of each task

    Walking: :math:`1.9 / v + 0.35` seconds, monotone decreasing in speed.
    Sitting and running use fixed durations from ``settings``.
    """
    if task == 'walking':
        return settings.duration_slope / speed_kmh + settings.duration_offset
    if task == 'sitting':
        return settings.sitting_period
    if task == 'running':
        return settings.running_cycle_duration
    raise NotImplementedError(f'Unknown task {task}')


def default_profile(
        task: str = 'walking',
        speed_kmh: float = 2.0,
        settings: GaitSettings = GaitSettings()) -> GaitProfile:
    """Returns the default profile of a task at a speed
    """
    return GaitProfile(
        task=task,
        speed_kmh=speed_kmh,
        cycle_duration=cycle_duration_for(task, speed_kmh, settings),
        settings=settings
    )


def cycle_phase(t: Number, cycle_duration: float) -> np.ndarray:
    """Gait phase in :math:`[0, 1)` of sample times"""
    return np.mod(np.asarray(t, dtype=float) / cycle_duration, 1.0)


@dataclass(frozen=True)
class GroundTruthTrace:
    """Sampled ground truth of a simulated gait

    All arrays have the same length and are read-only.

    Attributes:
        cycle_duration: Duration of one cycle, used to compute phases
    """

    t: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    z_ddot: np.ndarray
    r_cop: np.ndarray
    f_grf: np.ndarray
    tau_ext: np.ndarray
    knee_angle: np.ndarray
    cycle_duration: float

    def __post_init__(self):
        length = None
        for name in TRACE_COLUMNS:
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
            if length is None:
                length = len(array)
            elif len(array) != length:
                raise ValueError(
                    f'Column "{name}" has length {len(array)}, '
                    f'expected {length}'
                )
        if not self.cycle_duration > 0:
            raise FieldError('cycle_duration', 'must be > 0')

    def __len__(self) -> int:
        return len(self.t)

    @property
    def ankle_moment(self) -> np.ndarray:
        """Alias of :attr:`tau_ext`"""
        return self.tau_ext

    @property
    def phase(self) -> np.ndarray:
        """Gait phase in :math:`[0, 1)` of every sample"""
        return cycle_phase(self.t, self.cycle_duration)

    def cycle_starts(self) -> np.ndarray:
        """Indices of the first sample of every complete or partial cycle
        """
        cycle_index = np.floor(
            self.t / self.cycle_duration + 1e-9
        ).astype(int)
        starts = np.flatnonzero(np.diff(cycle_index)) + 1
        return np.concatenate([[0], starts]).astype(int)

    def to_frame(self) -> pd.DataFrame:
        """Returns the trace as a :class:`pandas.DataFrame` with the CSV
        columns"""
        return pd.DataFrame({name: getattr(self, name)
                             for name in TRACE_COLUMNS})

    def to_csv(self, path) -> None:
        """Writes the trace as CSV (header row, ``.`` decimals, LF endings)
        """
        self.to_frame().to_csv(path, index=False, lineterminator='\n')

    @staticmethod
    def from_csv(path, cycle_duration: float) -> 'GroundTruthTrace':
        """Reads a trace written by :meth:`to_csv`

        Raises:
            ValueError: If a column is missing
        """
        frame = pd.read_csv(path)
        missing = [name for name in TRACE_COLUMNS if name not in frame.columns]
        if missing:
            raise ValueError(f'{path}: missing columns {missing}')
        return GroundTruthTrace(
            cycle_duration=cycle_duration,
            **{name: frame[name].to_numpy(dtype=float)
               for name in TRACE_COLUMNS}
        )


def sampled_cycle_duration(profile: GaitProfile, dt: float) -> float:
    """Cycle duration rounded to a whole number of samples of step ``dt``,
    as simulated by :func:`generate_gait`"""
    return int(round(profile.cycle_duration / dt)) * dt


def generate_gait(
        profile: GaitProfile,
        n_cycles: int,
        params: PlantParams,
        seed: int) -> GroundTruthTrace:
    """Simulates ``n_cycles`` gait cycles

    The seed only perturbs the GRF amplitude of each cycle, uniformly within
    :math:`\\pm` ``amplitude_variation``. The joint starts from the static
    equilibrium of the first torque sample.

    Raises:
        ValueError: If ``n_cycles < 1`` or the profile pulls on the ground
        SimulationDivergedError: If the joint leaves its physical range
    """
    if n_cycles < 1:
        raise FieldError('n_cycles', 'must be >= 1')
    samples_per_cycle = int(round(profile.cycle_duration / params.dt))
    if samples_per_cycle < 2:
        raise FieldError('dt', 'too coarse for the cycle duration')

    grid = np.arange(samples_per_cycle) / samples_per_cycle
    load = profile.load_fraction(grid)
    if np.any(load < -1e-9):
        raise ValueError(f'Profile "{profile.task}" pulls on the ground')

    variation = profile.settings.amplitude_variation
    amplitudes = substream(seed, 'gait', 'amplitude').uniform(
        1.0 - variation, 1.0 + variation, size=n_cycles
    )

    n_samples = n_cycles * samples_per_cycle
    t = np.arange(n_samples) * params.dt
    cycle_duration = sampled_cycle_duration(profile, params.dt)
    phase = cycle_phase(t, cycle_duration)
    scale = np.repeat(amplitudes, samples_per_cycle)
    z_ddot = params.gravity * (scale * profile.load_fraction(phase) - 1.0)
    f_grf = grf_from_accel(z_ddot, params)
    r_cop = profile.cop_lever(phase)
    tau_ext = torque_from_grf(r_cop, f_grf)
    knee_angle = profile.knee_angle(phase)

    theta = np.empty(n_samples)
    theta_dot = np.empty(n_samples)
    theta0 = tau_ext[0] / params.stiffness if params.stiffness > 0 else 0.0
    if abs(theta0) > pi:
        raise SimulationDivergedError(0, float(theta0))
    current = JointState(float(theta0), 0.0)
    theta[0], theta_dot[0] = current.theta, current.theta_dot
    for i in range(1, n_samples):
        current = step(current, float(tau_ext[i - 1]), params, step_index=i)
        theta[i], theta_dot[i] = current.theta, current.theta_dot

    return GroundTruthTrace(
        t=t,
        theta=theta,
        theta_dot=theta_dot,
        z_ddot=z_ddot,
        r_cop=r_cop,
        f_grf=f_grf,
        tau_ext=tau_ext,
        knee_angle=knee_angle,
        cycle_duration=cycle_duration
    )


def mechanical_energy(state: JointState, params: PlantParams) -> float:
    """Lyapunov energy :math:`\\frac{1}{2} I \\dot{\\theta}^2 + \\frac{1}{2} k
    \\theta^2`"""
    return 0.5 * params.inertia * state.theta_dot ** 2 + \
        0.5 * params.stiffness * state.theta ** 2


def natural_period(params: PlantParams) -> float:
    """Period :math:`2 \\pi \\sqrt{I / k}` of the undamped oscillator

    Raises:
        ValueError: If the stiffness is zero
    """
    if params.stiffness <= 0:
        raise FieldError('stiffness', 'must be > 0 for oscillation')
    return 2 * pi * (params.inertia / params.stiffness) ** 0.5
