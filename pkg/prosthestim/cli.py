"""Command-line interface

Subcommands::

    python -m prosthestim simulate  [--config PATH] [--seed N] [--out DIR]
    python -m prosthestim train     --data DIR [--hybrid] [--resume MODEL]
    python -m prosthestim estimate  --filter {kf,ekf,ukf,lstm,hybrid}
                                    [--sensors CSV [--truth CSV]] [--model M]
    python -m prosthestim benchmark [--quick] [--jobs N] [--tasks ...]

Flags override the configuration file. The log level is read from the
``PROSTHESTIM_LOG`` environment variable (default ``WARNING``).

Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage or
configuration error.
"""

import argparse
import json
import logging
import os
import sys
import textwrap
from dataclasses import (
    replace
)
from typing import (
    Dict,
    List,
    Optional,
    Sequence
)

import numpy as np
import pandas as pd

from prosthestim import (
    config as configuration
)
from prosthestim.benchmark import (
    emit_report,
    quick_benchmark,
    run_benchmark
)
from prosthestim.common import (
    ConfigError,
    DatasetError,
    FieldError,
    ProsthestimError
)
from prosthestim.config import (
    RunConfig
)
from prosthestim.datasets import (
    fill_gaps,
    load_training_data,
    simulate_trial,
    simulate_trials,
    write_dataset
)
from prosthestim.filter_model import (
    initial_belief
)
from prosthestim.filters import (
    FILTER_KINDS,
    make_estimator,
    nominal_levers,
    run_estimator
)
from prosthestim.hybrid import (
    HybridEstimator,
    run_hybrid
)
from prosthestim.metrics import (
    r_squared,
    rmse,
    rmse_percent
)
from prosthestim.neural_io import (
    load_model,
    save_model
)
from prosthestim.neural_training import (
    train
)
from prosthestim.plant import (
    TASKS,
    GroundTruthTrace,
    PlantParams,
    default_profile,
    sampled_cycle_duration
)
from prosthestim.random_streams import (
    derive_seed
)
from prosthestim.sensors import (
    SensorStream,
    noise_covariance
)


logger = logging.getLogger(__name__)

LOG_ENV = 'PROSTHESTIM_LOG'

ESTIMATORS = FILTER_KINDS + ('lstm', 'hybrid')

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def configure_logging() -> None:
    """Configures the root logger from ``PROSTHESTIM_LOG``"""
    name = os.environ.get(LOG_ENV, 'WARNING').upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s'
    )


def _override(record, section: str, **changes):
    changes = {k: v for k, v in changes.items() if v is not None}
    if not changes:
        return record
    try:
        return replace(record, **changes)
    except FieldError as error:
        path = f'{section}.{error.field}' if section else error.field
        raise ConfigError(path, error.message) from error


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Configuration file, or defaults, with the flags applied

    Raises:
        ConfigError: If the file or a flag is invalid
    """
    config = configuration.load(args.config) if args.config else RunConfig()
    config = _override(config, '', seed=args.seed, out=args.out)
    tasks = tuple(args.tasks) if args.tasks else None
    simulate = _override(config.simulate, 'simulate', tasks=tasks)
    bench = _override(config.benchmark, 'benchmark', tasks=tasks,
                      jobs=args.jobs)
    if getattr(args, 'quick', False):
        bench = quick_benchmark(bench)
    return replace(config, simulate=simulate, benchmark=bench)


def _output_dir(config: RunConfig) -> str:
    os.makedirs(config.out, exist_ok=True)
    return config.out


def echo_config(config: RunConfig, args: argparse.Namespace,
                directory: str) -> None:
    """Writes the effective configuration, and the source file if any, into
    ``directory``"""
    with open(os.path.join(directory, 'config.yaml'), 'w',
              encoding='utf-8', newline='\n') as file:
        file.write(configuration.dumps(config))
    if args.config:
        with open(args.config, encoding='utf-8') as source, \
                open(os.path.join(directory, 'config.source.yaml'), 'w',
                     encoding='utf-8', newline='\n') as file:
            file.write(source.read())


def cmd_simulate(config: RunConfig, args: argparse.Namespace,
                 parser: argparse.ArgumentParser) -> int:
    """Writes ground truth, sensor and dataset CSV files of every configured
    trial"""
    directory = _output_dir(config)
    trials = simulate_trials(config.simulate, config.plant, config.noise,
                             config.seed, config.gait)
    for trial in trials:
        name = f'{trial.task}_{trial.speed_kmh:g}_{trial.trial_index}'
        trial.truth.to_csv(os.path.join(directory, f'truth_{name}.csv'))
        trial.stream.to_csv(os.path.join(directory, f'sensors_{name}.csv'))
        write_dataset(trial.dataset(),
                      os.path.join(directory, f'dataset_{name}.csv'))
        pd.DataFrame(trial.raw_channels()).to_csv(
            os.path.join(directory, f'raw_{name}.csv'), index=False,
            lineterminator='\n'
        )
        logger.info('Simulated %s: %d samples', name, len(trial.truth))
    echo_config(config, args, directory)
    print(f'{len(trials)} trials written to {directory}')
    return EXIT_OK


def cmd_train(config: RunConfig, args: argparse.Namespace,
              parser: argparse.ArgumentParser) -> int:
    """Trains a network on a data directory and writes the model and its
    training log"""
    if not args.data:
        parser.error('train needs --data')
    network = config.benchmark.hybrid_network if args.hybrid \
        else config.network
    trials = load_training_data(
        args.data, network.input_channels, network.target_channels,
        prefix='raw_' if args.hybrid else 'dataset_'
    )
    initial = load_model(args.resume) if args.resume else None
    spec = replace(config.train, seed=derive_seed(config.seed, 'train'))
    model, log = train(trials, network, spec, initial)
    directory = _output_dir(config)
    path = args.model or os.path.join(directory, 'model.pstlstm')
    save_model(model, path)
    log.to_csv(os.path.join(directory, 'train_log.csv'))
    echo_config(config, args, directory)
    print(f'model written to {path}, best epoch {log.best_epoch}')
    return EXIT_OK


def stream_channels(stream: SensorStream, levers: Sequence[float],
                    plant: PlantParams) -> Dict[str, np.ndarray]:
    """Network input channels available from a sensor stream"""
    channels = {
        'force_plate': fill_gaps(stream.f_z),
        'grf': plant.mass * (plant.gravity + stream.z_ddot),
        'omega': stream.omega,
        'z_ddot': stream.z_ddot,
        'r_cop': np.asarray(levers, dtype=float),
    }
    if not np.all(np.isnan(stream.knee_angle)):
        channels['knee_angle'] = fill_gaps(stream.knee_angle)
    return channels


def _scores(truth: Optional[np.ndarray], estimate: Optional[np.ndarray],
            suffix: str) -> Dict[str, Optional[float]]:
    keys = (f'rmse_{suffix}', f'rmse_pct_{suffix}', f'r2_{suffix}')
    if truth is None or estimate is None:
        return dict.fromkeys(keys)
    values = []
    for function in (rmse, rmse_percent, r_squared):
        try:
            values.append(function(truth, estimate))
        except ValueError:
            values.append(None)
    return dict(zip(keys, values))


def cmd_estimate(config: RunConfig, args: argparse.Namespace,
                 parser: argparse.ArgumentParser) -> int:
    """Runs one estimator over a sensor stream and prints a JSON summary"""
    kind = args.filter
    if kind in ('lstm', 'hybrid') and not args.model:
        parser.error(f'--filter {kind} needs --model')
    if args.truth and not args.sensors:
        parser.error('--truth needs --sensors')
    plant = config.plant
    profile = default_profile(args.task, args.speed, config.gait)
    truth: Optional[GroundTruthTrace] = None
    if args.sensors:
        stream = SensorStream.from_csv(args.sensors)
        cycle_duration = sampled_cycle_duration(profile, plant.dt)
        if args.truth:
            truth = GroundTruthTrace.from_csv(args.truth, cycle_duration)
        levers = nominal_levers(profile, stream.t, cycle_duration)
    else:
        simulate = config.simulate
        trial = simulate_trial(
            args.task, args.speed, plant, config.noise,
            derive_seed(config.seed, 'estimate'), simulate.n_cycles,
            config.gait, simulate.force_dropout,
            simulate.dropout_probability
        )
        stream, truth, levers = trial.stream, trial.truth, trial.levers

    directory = _output_dir(config)
    path = os.path.join(directory, f'trace_{kind}.csv')
    process = config.filter.process_model(plant)
    noise_cov = noise_covariance(config.noise)
    start = initial_belief(stream[0], float(levers[0]), plant,
                           config.filter.initial_variance)
    theta: Optional[np.ndarray]
    f_z: Optional[np.ndarray]
    if kind in FILTER_KINDS:
        estimator = make_estimator(kind, process, noise_cov,
                                   config.filter.ukf,
                                   config.filter.discretization)
        trace = run_estimator(estimator, stream, levers, start)
        trace.to_csv(path)
        theta, f_z = trace.theta, trace.f_z
    elif kind == 'hybrid':
        model = load_model(args.model)
        hybrid = HybridEstimator(
            process, noise_cov, config.filter.ukf, model,
            replace(config.hybrid, history_k=model.config.window_length)
        )
        hybrid_trace = run_hybrid(hybrid, stream, levers, start)
        hybrid_trace.to_csv(path)
        theta, f_z = hybrid_trace.theta, hybrid_trace.f_z
    else:
        model = load_model(args.model)
        channels = stream_channels(stream, levers, plant)
        missing = [c for c in model.config.input_channels
                   if c not in channels]
        if missing:
            raise DatasetError(f'channels {missing} are not available from '
                               'a sensor stream', args.sensors)
        prediction = model.predict_series(np.stack(
            [channels[c] for c in model.config.input_channels], axis=1
        ))
        targets = list(model.config.target_channels)
        theta = prediction[:, targets.index('ankle_angle')] \
            if 'ankle_angle' in targets else None
        f_z = prediction[:, targets.index('f_z')] \
            if 'f_z' in targets else None
        frame = pd.DataFrame({'t': stream.t})
        for index, name in enumerate(targets):
            frame[name] = prediction[:, index]
        frame.to_csv(path, index=False, lineterminator='\n')

    summary: Dict[str, object] = {
        'filter': kind,
        'samples': len(stream),
        'trace': path,
    }
    summary.update(_scores(None if truth is None else truth.theta, theta,
                           'theta'))
    summary.update(_scores(None if truth is None else truth.f_grf, f_z,
                           'f_z'))
    print(json.dumps(summary))
    return EXIT_OK


def cmd_benchmark(config: RunConfig, args: argparse.Namespace,
                  parser: argparse.ArgumentParser) -> int:
    """Runs the benchmark matrix and writes the report files"""
    report = run_benchmark(config)
    directory = _output_dir(config)
    for path in emit_report(report, directory):
        print(path)
    echo_config(config, args, directory)
    if all(row.n_seeds == 0 for row in report.rows):
        logger.error('Every benchmark cell failed')
        return EXIT_FAILURE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Returns the argument parser, whose epilog lists the default
    configuration"""
    defaults = textwrap.indent(configuration.dumps(RunConfig()), '  ')
    parser = argparse.ArgumentParser(
        prog='prosthestim',
        description='Ankle prosthesis state estimation: simulation, '
                    'filters, LSTM and hybrid LSTM-UKF benchmark',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f'default configuration:\n{defaults}'
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML configuration file')
    common.add_argument('--seed', type=int, help='master seed')
    common.add_argument('--out', help='output directory')
    common.add_argument('--jobs', type=int,
                        help='worker processes, default logical cores')
    common.add_argument('--tasks', nargs='+', choices=TASKS,
                        help='restricts the simulated or benchmarked tasks')

    commands = parser.add_subparsers(dest='command', required=True)
    simulate = commands.add_parser('simulate', parents=[common],
                                   help='writes ground truth and sensor CSVs')
    simulate.set_defaults(run=cmd_simulate)

    training = commands.add_parser('train', parents=[common],
                                   help='trains a network')
    training.add_argument('--data', help='directory of sheets or datasets')
    training.add_argument('--model', help='model file to write')
    training.add_argument('--resume', help='model file to continue from')
    training.add_argument('--hybrid', action='store_true',
                          help='trains the network of the hybrid estimator '
                               'on raw_*.csv files')
    training.set_defaults(run=cmd_train)

    estimate = commands.add_parser('estimate', parents=[common],
                                   help='runs one estimator')
    estimate.add_argument('--filter', choices=ESTIMATORS, default='ukf')
    estimate.add_argument('--model', help='model file, for lstm and hybrid')
    estimate.add_argument('--sensors', help='sensor CSV, simulated if absent')
    estimate.add_argument('--truth', help='ground truth CSV of --sensors')
    estimate.add_argument('--task', choices=TASKS, default='walking')
    estimate.add_argument('--speed', type=float, default=2.0,
                          help='walking speed, km/h')
    estimate.set_defaults(run=cmd_estimate)

    bench = commands.add_parser('benchmark', parents=[common],
                                help='runs the benchmark matrix')
    bench.add_argument('--quick', action='store_true',
                       help='small matrix and small networks')
    bench.set_defaults(run=cmd_benchmark)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point, returns the exit code"""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging()
    try:
        config = resolve_config(args)
        return args.run(config, args, parser)
    except ConfigError as error:
        print(f'configuration error: {error}', file=sys.stderr)
        return EXIT_USAGE
    except (ProsthestimError, ValueError, OSError) as error:
        logger.error('%s', error)
        print(f'error: {error}', file=sys.stderr)
        return EXIT_FAILURE
