"""Trial datasets

A :class:`TrialDataset` holds the named channels of one trial, every channel
resampled to 1001 points per gait cycle. Datasets come either from the
simulator (:func:`simulate_trial`, :func:`reference_cohort`) or from
exported spreadsheets (:func:`load_trials`).

Channels of synthetic trials:

* ``force_plate``: noisy force plate, gaps interpolated
* ``grf``: GRF from the accelerometer, :math:`m (g + \\ddot{z}_m)`
* ``knee_angle``: noisy knee encoder
* ``ankle_angle``, ``ankle_moment``, ``f_z``, ``theta_dot``: ground truth
* ``omega``, ``z_ddot``: gyroscope and accelerometer
* ``r_cop``: nominal COP lever
"""

import logging
import os
from dataclasses import (
    dataclass,
    replace
)
from typing import (
    Dict,
    List,
    Optional,
    Sequence,
    Tuple
)

import numpy as np
import pandas as pd

from prosthestim.common import (
    ChannelSet,
    DatasetError,
    FieldError,
    Interval
)
from prosthestim.filters import (
    nominal_levers
)
from prosthestim.metrics import (
    SAMPLES_PER_CYCLE,
    resample_cycle
)
from prosthestim.plant import (
    TASKS,
    GaitSettings,
    GroundTruthTrace,
    PlantParams,
    default_profile,
    generate_gait
)
from prosthestim.random_streams import (
    derive_seed
)
from prosthestim.sensors import (
    NoiseSpec,
    SensorStream,
    corrupt_trace
)


logger = logging.getLogger(__name__)

CASE_IDS = ('I', 'II', 'III', 'IV')

SHEET_FILES = (
    'ankle_angle_left.csv',
    'ankle_angle_right.csv',
    'GRF_left.csv',
    'GRF_right.csv',
)

SHEET_COLUMNS = 10


@dataclass(frozen=True)
class CaseSpec:
    """Input channel set of the standalone network"""

    case_id: str
    channels: ChannelSet


CASES: Dict[str, CaseSpec] = {
    'I': CaseSpec('I', ('force_plate', 'grf')),
    'II': CaseSpec('II', ('force_plate', 'knee_angle')),
    'III': CaseSpec('III', ('grf', 'knee_angle')),
    'IV': CaseSpec('IV', ('force_plate', 'grf', 'knee_angle')),
}


def case_spec(case_id: str) -> CaseSpec:
    """Returns the case of an identifier

    Raises:
        NotImplementedError: If the case is unknown
    """
    if case_id not in CASES:
        raise NotImplementedError(f'Unknown case {case_id}')
    return CASES[case_id]


@dataclass
class TrialDataset:
    """Cycle-normalized channels of one trial

    Attributes:
        subject_id: Subject, or ``left``/``right`` for external sheets
        speed_kmh: Walking speed, ``None`` if unknown
        trial_index: Index of the trial within its subject
        channels: Named series of equal length, a multiple of
            ``samples_per_cycle``, free of NaN
        task: Task of the trial
        samples_per_cycle: Points per normalized cycle
    """

    subject_id: str
    speed_kmh: Optional[float]
    trial_index: int
    channels: Dict[str, np.ndarray]
    task: str = 'walking'
    samples_per_cycle: int = SAMPLES_PER_CYCLE

    def __post_init__(self):
        if not self.channels:
            raise FieldError('channels', 'must not be empty')
        lengths = {name: len(series) for name, series
                   in self.channels.items()}
        if len(set(lengths.values())) != 1:
            raise FieldError('channels', f'lengths differ: {lengths}')
        length = next(iter(lengths.values()))
        if length == 0 or length % self.samples_per_cycle != 0:
            raise FieldError(
                'channels',
                f'length {length} is not a multiple of '
                f'{self.samples_per_cycle}'
            )
        for name, series in self.channels.items():
            series = np.asarray(series, dtype=float)
            if np.any(np.isnan(series)):
                raise FieldError(f'channels.{name}', 'contains NaN')
            self.channels[name] = series

    def __len__(self) -> int:
        return len(next(iter(self.channels.values())))

    @property
    def n_cycles(self) -> int:
        """Number of normalized cycles"""
        return len(self) // self.samples_per_cycle

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Stacks channels into an array of shape ``(T, len(names))``

        Raises:
            KeyError: If a channel is missing
        """
        missing = [name for name in names if name not in self.channels]
        if missing:
            raise KeyError(
                f'Trial {self.subject_id}/{self.trial_index} lacks channels '
                f'{missing}'
            )
        return np.stack([self.channels[name] for name in names], axis=1)


def fill_gaps(series: Sequence[float]) -> np.ndarray:
    """Linear interpolation over NaN gaps, edges held

    Raises:
        DatasetError: If every sample is missing
    """
    series = pd.Series(np.asarray(series, dtype=float))
    if series.isna().all():
        raise DatasetError('channel has no valid sample')
    return series.interpolate(limit_direction='both').to_numpy()


@dataclass(frozen=True)
class SimulationSettings:
    """Trials produced by the simulator

    Attributes:
        tasks: Simulated tasks
        speeds: Walking speeds, km/h
        n_cycles: Cycles per trial
        trials: Trials per task and speed
        force_dropout: Phase intervals without force plate
        dropout_probability: Per-sample probability of a missing force sample
    """

    tasks: Tuple[str, ...] = TASKS
    speeds: Tuple[float, ...] = (2.0,)
    n_cycles: int = 3
    trials: int = 1
    force_dropout: Tuple[Interval, ...] = ()
    dropout_probability: float = 0.0

    def __post_init__(self):
        for task in self.tasks:
            if task not in TASKS:
                raise FieldError('tasks', f'unknown task {task}')
        if not self.tasks:
            raise FieldError('tasks', 'must not be empty')
        for speed in self.speeds:
            if not 0.5 <= speed <= 6.0:
                raise FieldError('speeds', 'must lie in [0.5, 6]')
        if not self.speeds:
            raise FieldError('speeds', 'must not be empty')
        if self.n_cycles < 1:
            raise FieldError('n_cycles', 'must be >= 1')
        if self.trials < 1:
            raise FieldError('trials', 'must be >= 1')
        if not 0 <= self.dropout_probability <= 1:
            raise FieldError('dropout_probability', 'must lie in [0, 1]')
        intervals = tuple(tuple(float(v) for v in pair)
                          for pair in self.force_dropout)
        for pair in intervals:
            if len(pair) != 2 or not 0 <= pair[0] < pair[1] <= 1:
                raise FieldError('force_dropout',
                                 f'invalid phase interval {pair}')
        object.__setattr__(self, 'force_dropout', intervals)
        object.__setattr__(self, 'tasks', tuple(self.tasks))
        object.__setattr__(self, 'speeds',
                           tuple(float(s) for s in self.speeds))


@dataclass(frozen=True)
class SyntheticTrial:
    """Ground truth, sensor stream and COP input of a simulated trial"""

    task: str
    speed_kmh: float
    params: PlantParams
    truth: GroundTruthTrace
    stream: SensorStream
    levers: np.ndarray
    subject_id: str = 'synthetic'
    trial_index: int = 0

    def boundaries(self) -> List[int]:
        """Cycle boundaries of the raw series"""
        return list(self.truth.cycle_starts()) + [len(self.truth)]

    def normalize(self, series: Sequence[float]) -> np.ndarray:
        """Resamples a raw series to 1001 points per cycle, concatenated"""
        return resample_cycle(series, self.boundaries()).reshape(-1)

    def raw_channels(self) -> Dict[str, np.ndarray]:
        """Every dataset channel at the simulation rate"""
        stream = self.stream
        params = self.params
        return {
            'force_plate': fill_gaps(stream.f_z),
            'grf': params.mass * (params.gravity + stream.z_ddot),
            'knee_angle': stream.knee_angle,
            'ankle_angle': self.truth.theta,
            'ankle_moment': self.truth.tau_ext,
            'f_z': self.truth.f_grf,
            'theta_dot': self.truth.theta_dot,
            'omega': stream.omega,
            'z_ddot': stream.z_ddot,
            'r_cop': self.levers,
        }

    def dataset(self) -> TrialDataset:
        """Cycle-normalized dataset of the trial"""
        return TrialDataset(
            subject_id=self.subject_id,
            speed_kmh=self.speed_kmh,
            trial_index=self.trial_index,
            channels={name: self.normalize(series)
                      for name, series in self.raw_channels().items()},
            task=self.task
        )

    def arrays(self, inputs: Sequence[str],
               targets: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        """Raw-rate input and target arrays"""
        channels = self.raw_channels()
        return (np.stack([channels[name] for name in inputs], axis=1),
                np.stack([channels[name] for name in targets], axis=1))


def simulate_trial(
        task: str,
        speed_kmh: float,
        params: PlantParams,
        noise: NoiseSpec,
        seed: int,
        n_cycles: int = 3,
        settings: GaitSettings = GaitSettings(),
        force_dropout: Sequence[Interval] = (),
        dropout_probability: float = 0.0,
        subject_id: str = 'synthetic',
        trial_index: int = 0) -> SyntheticTrial:
    """Simulates one trial

    The gait and the sensor noise draw from substreams of ``seed``; the seed
    of ``noise`` is ignored.
    """
    profile = default_profile(task, speed_kmh, settings)
    truth = generate_gait(profile, n_cycles, params,
                          derive_seed(seed, 'gait'))
    noise = replace(noise, seed=derive_seed(seed, 'noise'))
    stream = corrupt_trace(truth, noise, force_dropout, dropout_probability)
    levers = nominal_levers(profile, stream.t, truth.cycle_duration)
    return SyntheticTrial(task, speed_kmh, params, truth, stream, levers,
                          subject_id, trial_index)


def simulate_trials(
        settings: SimulationSettings,
        params: PlantParams,
        noise: NoiseSpec,
        seed: int,
        gait: GaitSettings = GaitSettings()) -> List[SyntheticTrial]:
    """Simulates every (task, speed, trial) combination of ``settings``"""
    trials = []
    for task in settings.tasks:
        for speed in settings.speeds:
            for index in range(settings.trials):
                trials.append(simulate_trial(
                    task, speed, params, noise,
                    derive_seed(seed, 'trial', task, f'{speed:g}', index),
                    settings.n_cycles, gait, settings.force_dropout,
                    settings.dropout_probability, trial_index=index
                ))
    return trials


COHORT_SUBJECTS = 13
COHORT_TRIALS = 7
COHORT_SPEEDS = (1.0, 2.0, 3.0)
COHORT_MASS_RANGE = (52.0, 83.7)


def reference_cohort(
        seed: int,
        params: PlantParams = PlantParams(),
        noise: NoiseSpec = NoiseSpec(),
        settings: GaitSettings = GaitSettings()) -> List[TrialDataset]:
    """Synthetic cohort of 13 subjects with 7 one-cycle walking trials each

    Subject masses are evenly spread over 52 to 83.7 kg, trial speeds cycle
    through 1, 2 and 3 km/h, which yields
    :math:`13 \\times 7 \\times 1001 = 91091` samples per channel.
    """
    masses = np.linspace(*COHORT_MASS_RANGE, COHORT_SUBJECTS)
    cohort = []
    for subject, mass in enumerate(masses):
        subject_params = replace(params, mass=float(mass))
        for index in range(COHORT_TRIALS):
            speed = COHORT_SPEEDS[index % len(COHORT_SPEEDS)]
            trial = simulate_trial(
                'walking', speed, subject_params, noise,
                derive_seed(seed, 'cohort', subject, index),
                n_cycles=1, settings=settings,
                subject_id=f'S{subject + 1:02d}', trial_index=index
            )
            cohort.append(trial.dataset())
    return cohort


def _parse_sheet(path: str) -> np.ndarray:
    """Reads one exported sheet into an array of shape ``(rows, 10)``

    A first row that does not parse as numbers is a header.
    """
    try:
        frame = pd.read_csv(path, header=None, dtype=str,
                            keep_default_na=False, skip_blank_lines=True)
    except pd.errors.ParserError as error:
        raise DatasetError(f'ragged layout: {error}', path) from error
    except pd.errors.EmptyDataError as error:
        raise DatasetError('empty file', path) from error
    if frame.shape[1] != SHEET_COLUMNS:
        raise DatasetError(
            f'ragged layout: expected {SHEET_COLUMNS} columns, found '
            f'{frame.shape[1]}', path, column=frame.shape[1]
        )
    values = frame.to_numpy()
    start = 0
    try:
        [float(cell) for cell in values[0]]
    except ValueError:
        start = 1
    data = np.empty((len(values) - start, SHEET_COLUMNS))
    for row in range(start, len(values)):
        for column in range(SHEET_COLUMNS):
            cell = values[row, column]
            if not isinstance(cell, str) or cell.strip() == '':
                raise DatasetError('ragged layout: missing cell', path,
                                   row, column)
            try:
                data[row - start, column] = float(cell)
            except ValueError as error:
                raise DatasetError(f'non-numeric cell {cell!r}', path, row,
                                   column) from error
    if len(data) < 2:
        raise DatasetError('at least two samples per column are needed',
                           path)
    if not np.all(np.isfinite(data)):
        raise DatasetError('non-finite value', path)
    return data


def _column_cycles(column: np.ndarray) -> np.ndarray:
    """A column whose length is a multiple of 1001 is kept as is, any other
    column is one cycle resampled to 1001 points"""
    if len(column) % SAMPLES_PER_CYCLE == 0:
        return column
    return resample_cycle(column, [0, len(column)]).reshape(-1)


def load_trials(path) -> List[TrialDataset]:
    """Loads the four exported sheets of a bilateral recording

    Column :math:`j` of every sheet is trial :math:`j`; left and right sides
    are separate subjects. Angles are converted from degrees to radians,
    forces are in Newtons and populate ``grf``, ``force_plate`` and ``f_z``.

    Raises:
        DatasetError: If a file is missing, ragged, or holds a non-numeric
            cell, with its coordinates
    """
    path = str(path)
    missing = [name for name in SHEET_FILES
               if not os.path.isfile(os.path.join(path, name))]
    if missing:
        raise DatasetError(
            f'missing files {", ".join(missing)}; expected '
            f'{", ".join(SHEET_FILES)}', path
        )
    trials = []
    for side in ('left', 'right'):
        angles = _parse_sheet(os.path.join(path, f'ankle_angle_{side}.csv'))
        forces = _parse_sheet(os.path.join(path, f'GRF_{side}.csv'))
        for column in range(SHEET_COLUMNS):
            angle = _column_cycles(np.deg2rad(angles[:, column]))
            force = _column_cycles(forces[:, column])
            if len(angle) != len(force):
                raise DatasetError(
                    f'ankle angle and GRF of {side} trial {column} differ in '
                    'length', path, column=column
                )
            trials.append(TrialDataset(
                subject_id=side,
                speed_kmh=None,
                trial_index=column,
                channels={
                    'ankle_angle': angle,
                    'grf': force,
                    'force_plate': force.copy(),
                    'f_z': force.copy(),
                }
            ))
    logger.info('Loaded %d trials from %s', len(trials), path)
    return trials


def trial_arrays(
        trials: Sequence[TrialDataset],
        inputs: Sequence[str],
        targets: Sequence[str]) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Input and target arrays of every trial, for
    :func:`~prosthestim.neural_training.train`"""
    return [(trial.matrix(inputs), trial.matrix(targets)) for trial in trials]


def load_training_data(
        path,
        inputs: Sequence[str],
        targets: Sequence[str],
        prefix: str = 'dataset_') -> List[Tuple[np.ndarray, np.ndarray]]:
    """Training arrays from a directory

    The directory holds either the four exported sheets, or CSV files named
    ``<prefix>*.csv`` (one per trial, one column per channel) written by
    :func:`write_dataset`.

    Raises:
        DatasetError: If the directory is missing, holds no trial, or lacks
            a requested channel
    """
    path = str(path)
    if not os.path.isdir(path):
        raise DatasetError('no such directory', path)
    if any(os.path.isfile(os.path.join(path, name)) for name in SHEET_FILES):
        trials = load_trials(path)
        missing = [c for c in list(inputs) + list(targets)
                   if c not in trials[0].channels]
        if missing:
            raise DatasetError(
                f'missing channels {missing}; exported sheets provide '
                f'{sorted(trials[0].channels)}', path
            )
        return trial_arrays(trials, inputs, targets)
    names = sorted(name for name in os.listdir(path)
                   if name.startswith(prefix) and name.endswith('.csv'))
    if not names:
        raise DatasetError(f'no {prefix}*.csv file and no exported sheets',
                           path)
    trials = []
    for name in names:
        frame = pd.read_csv(os.path.join(path, name))
        missing = [c for c in list(inputs) + list(targets)
                   if c not in frame.columns]
        if missing:
            raise DatasetError(f'missing channels {missing}',
                               os.path.join(path, name))
        trials.append((frame[list(inputs)].to_numpy(dtype=float),
                       frame[list(targets)].to_numpy(dtype=float)))
    return trials


def write_dataset(trial: TrialDataset, path) -> None:
    """Writes the channels of a dataset as CSV, one column per channel"""
    frame = pd.DataFrame(trial.channels)
    frame.to_csv(path, index=False, lineterminator='\n')

