"""Benchmark harness

The benchmark matrix crosses tasks, speeds, cases and seeds. Every
combination is a *cell*: an independent job that simulates its own training
and evaluation trials, trains the networks it needs, runs the five
estimators (KF, EKF, UKF, LSTM, LSTM+UKF) on the evaluation trial and scores
them on the cycle-normalized series. The seed of a cell is derived from the
master seed and the cell coordinates, so that cells can run in any order on
a pool of worker processes.

Results are aggregated over seeds as median and interquartile range and
written as CSV, markdown tables and plot data.
"""

import logging
import os
import time
from concurrent.futures import (
    ProcessPoolExecutor
)
from dataclasses import (
    dataclass,
    field,
    replace
)
from typing import (
    TYPE_CHECKING,
    Dict,
    List,
    Optional,
    Sequence,
    Tuple
)

import numpy as np
import pandas as pd

from prosthestim.common import (
    CovarianceNotPSDError,
    FieldError,
    ProsthestimError
)
from prosthestim.datasets import (
    CASE_IDS,
    SyntheticTrial,
    case_spec,
    fill_gaps,
    simulate_trial,
    trial_arrays
)
from prosthestim.filter_model import (
    initial_belief
)
from prosthestim.filters import (
    make_estimator,
    run_estimator
)
from prosthestim.hybrid import (
    HYBRID_INPUTS,
    HYBRID_TARGETS,
    HybridEstimator,
    run_hybrid
)
from prosthestim.metrics import (
    SAMPLES_PER_CYCLE,
    integrate_gyro,
    r_squared,
    rmse_percent
)
from prosthestim.neural_training import (
    NetworkConfig,
    TrainSpec,
    train
)
from prosthestim.plant import (
    TASKS
)
from prosthestim.random_streams import (
    derive_seed
)
from prosthestim.sensors import (
    noise_covariance
)

if TYPE_CHECKING:
    from prosthestim.config import RunConfig


logger = logging.getLogger(__name__)

MODELS = ('KF', 'EKF', 'UKF', 'LSTM', 'LSTM+UKF')
"""Table row order"""

TARGETS = ('grf', 'ankle_angle')

REPORT_COLUMNS = (
    'model',
    'task',
    'target',
    'case',
    'speed',
    'rmse_pct_median',
    'rmse_pct_iqr',
    'r2_median',
    'n_seeds',
    'runtime_s',
)

BASELINE_COLUMNS = (
    'task',
    'target',
    'case',
    'speed',
    'seed',
    'raw_rmse_pct',
    'filter',
    'filter_rmse_pct',
)

PLOT_COLUMNS = ('phase_pct', 'truth', 'kf', 'ekf', 'ukf', 'lstm', 'lstm_ukf')

TASK_TITLES = {'walking': 'Walking', 'sitting': 'Sitting',
               'running': 'Running'}

TARGET_TITLES = {'grf': 'GRF', 'ankle_angle': 'ankle angle'}

NORMALIZATION_NOTE = (
    'RMSE (%) is normalized by the peak-to-peak range of the measured '
    'signal; figures are comparable across models and tasks, not with '
    'percentages normalized otherwise.'
)


@dataclass(frozen=True)
class BenchmarkConfig:
    """Benchmark matrix

    Attributes:
        models: Estimators to run, among :data:`MODELS`
        tasks: Table columns
        speeds: Walking speeds, km/h
        cases: Input cases of the standalone network
        seeds: Seeds per cell
        n_cycles: Cycles per simulated trial
        train_trials: Simulated trials available for training
        dropout_probability: Per-sample probability of a missing force sample
            in every simulated trial
        record_runtime: Writes the median runtime, which makes reports
            differ from run to run
        jobs: Worker processes, all cores when ``None``
        network: Standalone network
        hybrid_network: Network of the hybrid estimator
        train: Training protocol of both networks
    """

    models: Tuple[str, ...] = MODELS
    tasks: Tuple[str, ...] = TASKS
    speeds: Tuple[float, ...] = (2.0,)
    cases: Tuple[str, ...] = ('IV',)
    seeds: int = 5
    n_cycles: int = 3
    train_trials: int = 4
    dropout_probability: float = 0.2
    record_runtime: bool = False
    jobs: Optional[int] = None
    network: NetworkConfig = NetworkConfig(
        window_length=50, stride=25
    )
    hybrid_network: NetworkConfig = NetworkConfig(
        window_length=50, stride=25, target_offset=1,
        input_channels=HYBRID_INPUTS, target_channels=HYBRID_TARGETS
    )
    train: TrainSpec = TrainSpec(max_epochs=40, batch_size=64)

    def __post_init__(self):
        for name in ('models', 'tasks', 'speeds', 'cases'):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise FieldError(name, 'must not be empty')
        for model in self.models:
            if model not in MODELS:
                raise FieldError('models', f'unknown model {model}')
        for task in self.tasks:
            if task not in TASKS:
                raise FieldError('tasks', f'unknown task {task}')
        for case in self.cases:
            if case not in CASE_IDS:
                raise FieldError('cases', f'unknown case {case}')
        for speed in self.speeds:
            if not 0.5 <= speed <= 6.0:
                raise FieldError('speeds', 'must lie in [0.5, 6]')
        if self.seeds < 1:
            raise FieldError('seeds', 'must be >= 1')
        if self.n_cycles < 1:
            raise FieldError('n_cycles', 'must be >= 1')
        if self.train_trials < 2:
            raise FieldError('train_trials', 'must be >= 2')
        if not 0 <= self.dropout_probability < 1:
            raise FieldError('dropout_probability', 'must lie in [0, 1)')
        if self.jobs is not None and self.jobs < 1:
            raise FieldError('jobs', 'must be >= 1')
        if tuple(self.hybrid_network.input_channels) != HYBRID_INPUTS or \
                tuple(self.hybrid_network.target_channels) != HYBRID_TARGETS:
            raise FieldError(
                'hybrid_network',
                f'channels are fixed to {HYBRID_INPUTS} -> {HYBRID_TARGETS}'
            )


def quick_benchmark(config: BenchmarkConfig) -> BenchmarkConfig:
    """Small matrix and small networks for smoke runs"""
    small = dict(units=8, window_length=20, stride=20)
    return replace(
        config,
        speeds=config.speeds[:1],
        cases=config.cases[:1],
        seeds=2,
        n_cycles=2,
        train_trials=3,
        network=replace(config.network, **small),
        hybrid_network=replace(config.hybrid_network, **small),
        train=replace(config.train, max_epochs=5)
    )


@dataclass(frozen=True)
class Cell:
    """Coordinates of one benchmark job"""

    task: str
    speed: float
    case: str
    seed_index: int


@dataclass
class Score:
    """Score of one model on one target in one cell"""

    model: str
    target: str
    rmse_pct: float
    r2: float
    runtime: float


@dataclass
class CellResult:
    """Outcome of one cell

    Attributes:
        scores: Successful scores
        failures: Pairs (model, message) of failed models
        baselines: Raw-measurement RMSE per target, with the filter scores
        psd_aborts: Runs aborted on an unhealthy covariance
        nan_states: Runs that produced a non-finite state
        plot: Per target, the first normalized cycle of truth and estimates
        lstm_source_fraction: Of the hybrid run
    """

    cell: Cell
    scores: List[Score] = field(default_factory=list)
    failures: List[Tuple[str, str]] = field(default_factory=list)
    baselines: Dict[str, float] = field(default_factory=dict)
    psd_aborts: int = 0
    nan_states: int = 0
    plot: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)
    lstm_source_fraction: float = float('nan')


def _simulate(config: 'RunConfig', cell: Cell, seed: int,
              index: int) -> SyntheticTrial:
    bench = config.benchmark
    return simulate_trial(
        cell.task, cell.speed, config.plant, config.noise,
        derive_seed(seed, 'trial', index), bench.n_cycles, config.gait,
        dropout_probability=bench.dropout_probability, trial_index=index
    )


def _estimates(trial: SyntheticTrial,
               theta: np.ndarray,
               f_z: np.ndarray) -> Dict[str, np.ndarray]:
    return {'ankle_angle': trial.normalize(theta),
            'grf': trial.normalize(f_z)}


def run_cell(cell: Cell, config: 'RunConfig') -> CellResult:
    """Runs every model of one cell

    Failures of a model are recorded and do not stop the other models.
    """
    bench = config.benchmark
    seed = derive_seed(config.seed, 'cell', cell.task, f'{cell.speed:g}',
                       cell.case, cell.seed_index)
    result = CellResult(cell)
    trials = [_simulate(config, cell, seed, index)
              for index in range(bench.train_trials)]
    evaluation = _simulate(config, cell, seed, bench.train_trials)
    truth = evaluation.dataset()
    measured = {'ankle_angle': truth.channels['ankle_angle'],
                'grf': truth.channels['f_z']}

    process = config.filter.process_model(config.plant)
    noise_cov = noise_covariance(config.noise)
    ukf = config.filter.ukf
    initial = initial_belief(evaluation.stream[0], float(evaluation.levers[0]),
                             config.plant, config.filter.initial_variance)
    estimates: Dict[str, Dict[str, np.ndarray]] = {}
    runtimes: Dict[str, float] = {}

    def attempt(model: str, function) -> None:
        start = time.perf_counter()
        try:
            series = function()
        except CovarianceNotPSDError as error:
            result.psd_aborts += 1
            result.failures.append((model, str(error)))
            logger.error('Cell %s, %s: %s', cell, model, error)
            return
        except (ProsthestimError, ValueError, FloatingPointError) as error:
            result.failures.append((model, str(error)))
            logger.error('Cell %s, %s: %s', cell, model, error)
            return
        if not all(np.all(np.isfinite(s)) for s in series.values()):
            result.nan_states += 1
            result.failures.append((model, 'non-finite estimate'))
            logger.error('Cell %s, %s: non-finite estimate', cell, model)
            return
        runtimes[model] = time.perf_counter() - start
        estimates[model] = series

    for kind in ('KF', 'EKF', 'UKF'):
        if kind not in bench.models:
            continue

        def run_filter(kind=kind):
            estimator = make_estimator(
                kind.lower(), process, noise_cov, ukf,
                config.filter.discretization
            )
            trace = run_estimator(estimator, evaluation.stream,
                                  evaluation.levers, initial.copy())
            return _estimates(evaluation, trace.theta, trace.f_z)

        attempt(kind, run_filter)

    if 'LSTM' in bench.models:
        def run_lstm():
            channels = case_spec(cell.case).channels
            network = replace(bench.network, input_channels=channels,
                              target_channels=('ankle_angle', 'f_z'),
                              target_offset=0)
            spec = replace(bench.train, seed=derive_seed(seed, 'lstm'))
            model, _ = train(
                trial_arrays([t.dataset() for t in trials], channels,
                             network.target_channels),
                network, spec
            )
            prediction = model.predict_series(truth.matrix(channels))
            return {'ankle_angle': prediction[:, 0], 'grf': prediction[:, 1]}

        attempt('LSTM', run_lstm)

    if 'LSTM+UKF' in bench.models:
        def run_lstm_ukf():
            network = bench.hybrid_network
            spec = replace(bench.train, seed=derive_seed(seed, 'hybrid'))
            model, _ = train(
                [t.arrays(HYBRID_INPUTS, HYBRID_TARGETS) for t in trials],
                network, spec
            )
            hybrid = replace(config.hybrid,
                             history_k=network.window_length)
            estimator = HybridEstimator(process, noise_cov, ukf, model,
                                        hybrid)
            trace = run_hybrid(estimator, evaluation.stream,
                               evaluation.levers, initial.copy())
            result.lstm_source_fraction = trace.lstm_source_fraction()
            return _estimates(evaluation, trace.theta, trace.f_z)

        attempt('LSTM+UKF', run_lstm_ukf)

    for model, series in estimates.items():
        for target in TARGETS:
            try:
                result.scores.append(Score(
                    model, target,
                    rmse_percent(measured[target], series[target]),
                    r_squared(measured[target], series[target]),
                    runtimes[model]
                ))
            except ValueError as error:
                result.failures.append((model, f'{target}: {error}'))

    theta0 = initial.theta
    raw = _estimates(
        evaluation,
        integrate_gyro(evaluation.stream.t, evaluation.stream.omega, theta0),
        fill_gaps(evaluation.stream.f_z)
    )
    for target in TARGETS:
        try:
            result.baselines[target] = rmse_percent(measured[target],
                                                    raw[target])
        except ValueError as error:
            result.failures.append(('raw', f'{target}: {error}'))

    for target in TARGETS:
        plot = {'truth': measured[target][:SAMPLES_PER_CYCLE]}
        for model, series in estimates.items():
            plot[_plot_key(model)] = series[target][:SAMPLES_PER_CYCLE]
        result.plot[target] = plot
    return result


def _plot_key(model: str) -> str:
    return model.lower().replace('+', '_')


@dataclass
class ReportRow:
    """One aggregated row of the report"""

    model: str
    task: str
    target: str
    case: str
    speed: float
    rmse_pct_median: float
    rmse_pct_iqr: float
    r2_median: float
    n_seeds: int
    runtime_s: Optional[float] = None


@dataclass
class BenchmarkReport:
    """Aggregated benchmark results

    Attributes:
        rows: One row per (model, task, target, case, speed)
        baselines: Per-cell raw and filter scores
        failures: Tuples (cell, model, message)
        psd_aborts: Runs aborted on an unhealthy covariance
        nan_states: Runs with a non-finite state
        plots: Plot data keyed by (task, target, case, speed)
        lstm_source_fraction: Median over the hybrid runs
    """

    rows: List[ReportRow] = field(default_factory=list)
    baselines: List[Dict[str, object]] = field(default_factory=list)
    failures: List[Tuple[str, str, str]] = field(default_factory=list)
    psd_aborts: int = 0
    nan_states: int = 0
    plots: Dict[Tuple[str, str, str, float], pd.DataFrame] = field(
        default_factory=dict
    )
    lstm_source_fraction: float = float('nan')

    def to_frame(self) -> pd.DataFrame:
        """Returns the rows in the CSV layout"""
        return pd.DataFrame(
            [[getattr(row, column) for column in REPORT_COLUMNS]
             for row in self.rows],
            columns=list(REPORT_COLUMNS)
        )

    def cell(self, model: str, task: str, target: str,
             case: Optional[str] = None,
             speed: Optional[float] = None) -> Optional[ReportRow]:
        """Returns the row of a table cell, if any"""
        for row in self.rows:
            if (row.model, row.task, row.target) == (model, task, target) \
                    and (case is None or row.case == case) \
                    and (speed is None or row.speed == speed):
                return row
        return None


def _cells(bench: BenchmarkConfig) -> List[Cell]:
    return [Cell(task, speed, case, index)
            for task in bench.tasks
            for speed in bench.speeds
            for case in bench.cases
            for index in range(bench.seeds)]


def _run_cell_logged(cell: Cell, config: 'RunConfig') -> CellResult:
    try:
        return run_cell(cell, config)
    except (ProsthestimError, ValueError) as error:
        logger.error('Cell %s failed: %s', cell, error)
        result = CellResult(cell)
        result.failures.append(('*', str(error)))
        return result


def aggregate(results: Sequence[CellResult],
              bench: BenchmarkConfig) -> BenchmarkReport:
    """Reduces cell results to report rows, in table order"""
    report = BenchmarkReport()
    for result in results:
        report.psd_aborts += result.psd_aborts
        report.nan_states += result.nan_states
        for model, message in result.failures:
            cell = result.cell
            report.failures.append(
                (f'{cell.task}/{cell.speed:g}/{cell.case}/{cell.seed_index}',
                 model, message)
            )
    for model in [m for m in MODELS if m in bench.models]:
        for task in bench.tasks:
            for target in TARGETS:
                for case in bench.cases:
                    for speed in bench.speeds:
                        scores = [
                            score for result in results
                            if (result.cell.task, result.cell.case,
                                result.cell.speed) == (task, case, speed)
                            for score in result.scores
                            if (score.model, score.target) == (model, target)
                        ]
                        report.rows.append(_row(model, task, target, case,
                                                speed, scores, bench))
    for result in results:
        cell = result.cell
        for target, raw in result.baselines.items():
            for score in result.scores:
                if score.target != target or score.model not in \
                        ('KF', 'EKF', 'UKF', 'LSTM+UKF'):
                    continue
                report.baselines.append({
                    'task': cell.task, 'target': target, 'case': cell.case,
                    'speed': cell.speed, 'seed': cell.seed_index,
                    'raw_rmse_pct': raw, 'filter': score.model,
                    'filter_rmse_pct': score.rmse_pct,
                })
        if cell.seed_index == 0:
            for target, columns in result.plot.items():
                frame = pd.DataFrame({
                    'phase_pct': np.linspace(0.0, 100.0, SAMPLES_PER_CYCLE)
                })
                for column in PLOT_COLUMNS[1:]:
                    frame[column] = columns.get(
                        column, np.full(SAMPLES_PER_CYCLE, np.nan)
                    )
                report.plots[(cell.task, target, cell.case,
                              cell.speed)] = frame
    fractions = [r.lstm_source_fraction for r in results
                 if not np.isnan(r.lstm_source_fraction)]
    if fractions:
        report.lstm_source_fraction = float(np.median(fractions))
    return report


def _row(model, task, target, case, speed, scores: List[Score],
         bench: BenchmarkConfig) -> ReportRow:
    if not scores:
        return ReportRow(model, task, target, case, speed, float('nan'),
                         float('nan'), float('nan'), 0)
    values = np.array([score.rmse_pct for score in scores])
    q25, q75 = np.percentile(values, [25, 75])
    runtime = None
    if bench.record_runtime:
        runtime = float(np.median([score.runtime for score in scores]))
    return ReportRow(
        model, task, target, case, speed,
        float(np.median(values)), float(q75 - q25),
        float(np.median([score.r2 for score in scores])),
        len(scores), runtime
    )


def run_benchmark(config: 'RunConfig',
                  jobs: Optional[int] = None) -> BenchmarkReport:
    """Runs the benchmark matrix of ``config``

    Args:
        config: Run configuration
        jobs: Worker processes, overrides ``config.benchmark.jobs``; cells
            run in this process when 1
    """
    bench = config.benchmark
    cells = _cells(bench)
    workers = jobs or bench.jobs or os.cpu_count() or 1
    workers = min(workers, len(cells))
    logger.info('Running %d cells on %d workers', len(cells), workers)
    results: List[CellResult] = []
    if workers == 1:
        for cell in cells:
            results.append(_run_cell_logged(cell, config))
            logger.info('Cell %d/%d done', len(results), len(cells))
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            for result in executor.map(_run_cell_logged, cells,
                                       [config] * len(cells)):
                results.append(result)
                logger.info('Cell %d/%d done', len(results), len(cells))
    return aggregate(results, bench)


def _format(value: Optional[float]) -> str:
    if value is None or np.isnan(value):
        return 'n/a'
    return f'{value:.2f}'


def markdown_tables(report: BenchmarkReport) -> str:
    """Renders one table per target, case and speed; rows are models, columns
    tasks, cells ``median ± IQR``"""
    models = [m for m in MODELS if any(r.model == m for r in report.rows)]
    tasks = [t for t in TASKS if any(r.task == t for r in report.rows)]
    keys = list(dict.fromkeys((r.case, r.speed) for r in report.rows))
    lines = []
    for target in TARGETS:
        for case, speed in keys:
            lines.append(
                f'### RMSE (%) for {TARGET_TITLES[target]} estimation across '
                f'tasks (case {case}, {speed:g} km/h)'
            )
            lines.append('')
            lines.append('| Model | ' + ' | '.join(
                TASK_TITLES[t] for t in tasks) + ' |')
            lines.append('|---|' + '---|' * len(tasks))
            for model in models:
                cells = []
                for task in tasks:
                    row = report.cell(model, task, target, case, speed)
                    if row is None or row.n_seeds == 0:
                        cells.append('failed')
                    else:
                        cells.append(f'{_format(row.rmse_pct_median)} ± '
                                     f'{_format(row.rmse_pct_iqr)}')
                lines.append(f'| {model} | ' + ' | '.join(cells) + ' |')
            lines.append('')
    lines.append(f'*{NORMALIZATION_NOTE}*')
    lines.append('')
    lines.append(f'Covariance aborts: {report.psd_aborts}, non-finite '
                 f'states: {report.nan_states}, LSTM source fraction: '
                 f'{_format(report.lstm_source_fraction)}')
    if report.failures:
        lines.append('')
        lines.append('Failures:')
        lines.append('')
        for cell, model, message in report.failures:
            lines.append(f'- {cell} {model}: {message}')
    return '\n'.join(lines) + '\n'


def emit_report(report: BenchmarkReport, directory,
                formats: Sequence[str] = ('csv', 'markdown', 'plot')
                ) -> List[str]:
    """Writes the report files into ``directory``

    Returns:
        The paths written

    Raises:
        ValueError: If the report has no row
        OSError: If the directory is not writable
    """
    if not report.rows:
        raise FieldError('report', 'has no model row')
    directory = str(directory)
    os.makedirs(directory, exist_ok=True)
    written = []
    for kind in formats:
        if kind == 'csv':
            path = os.path.join(directory, 'report.csv')
            report.to_frame().to_csv(path, index=False, lineterminator='\n')
            written.append(path)
            path = os.path.join(directory, 'baselines.csv')
            pd.DataFrame(report.baselines, columns=list(BASELINE_COLUMNS)) \
                .to_csv(path, index=False, lineterminator='\n')
            written.append(path)
        elif kind == 'markdown':
            path = os.path.join(directory, 'tables.md')
            with open(path, 'w', encoding='utf-8', newline='\n') as file:
                file.write(markdown_tables(report))
            written.append(path)
        elif kind == 'plot':
            for (task, target, case, speed), frame in report.plots.items():
                path = os.path.join(
                    directory, f'plot_{task}_{target}_{case}_{speed:g}.csv'
                )
                frame.to_csv(path, index=False, lineterminator='\n')
                written.append(path)
        else:
            raise NotImplementedError(f'Unknown report format {kind}')
    return written


def load_report(path) -> BenchmarkReport:
    """Reads the rows of a ``report.csv``"""
    frame = pd.read_csv(path, keep_default_na=True)
    rows = []
    for record in frame.to_dict('records'):
        runtime = record['runtime_s']
        rows.append(ReportRow(
            model=str(record['model']),
            task=str(record['task']),
            target=str(record['target']),
            case=str(record['case']),
            speed=float(record['speed']),
            rmse_pct_median=float(record['rmse_pct_median']),
            rmse_pct_iqr=float(record['rmse_pct_iqr']),
            r2_median=float(record['r2_median']),
            n_seeds=int(record['n_seeds']),
            runtime_s=None if pd.isna(runtime) else float(runtime)
        ))
    return BenchmarkReport(rows=rows)
