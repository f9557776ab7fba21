# pylint: disable=missing-class-docstring
# pylint: disable=missing-function-docstring

"""Unit tests
"""

import io
import json
import os
import tempfile
import unittest
from contextlib import (
    redirect_stderr,
    redirect_stdout
)

import numpy as np

# pylint: disable wrong-import-position
from prosthestim.cli import (
    EXIT_OK,
    EXIT_USAGE,
    build_parser,
    main,
    resolve_config,
    stream_channels
)
from prosthestim.common import (
    ConfigError
)
from prosthestim.datasets import (
    SHEET_FILES
)
from prosthestim.plant import (
    PlantParams
)
from prosthestim.sensors import (
    SensorStream
)


SMALL_RUN = '''\
seed: 3
simulate: {tasks: [walking], n_cycles: 1, trials: 2}
network: {layers: 1, units: 4, window_length: 20, stride: 20}
train: {max_epochs: 1, batch_size: 32}
benchmark:
  hybrid_network: {layers: 1, units: 4, window_length: 20, stride: 20}
'''


SHEETS_RUN = '''\
seed: 3
network:
  layers: 1
  units: 4
  window_length: 20
  stride: 20
  input_channels: [force_plate, grf]
train: {max_epochs: 1, batch_size: 32}
'''


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def write_sheets(directory, rows=1001):
    for name in SHEET_FILES:
        with open(os.path.join(directory, name), 'w',
                  encoding='utf-8') as file:
            for row in range(rows):
                file.write(','.join(str(row % 7 + j) for j in range(10)))
                file.write('\n')


def write_config(directory, text=SMALL_RUN):
    path = os.path.join(directory, 'run.yaml')
    with open(path, 'w', encoding='utf-8') as file:
        file.write(text)
    return path


class ResolveConfigTest(unittest.TestCase):

    def test_resolve_config(self):
        parser = build_parser()
        args = parser.parse_args(['benchmark', '--seed', '9', '--tasks',
                                  'sitting', '--jobs', '2', '--quick'])
        config = resolve_config(args)
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.simulate.tasks, ('sitting',))
        self.assertEqual(config.benchmark.tasks, ('sitting',))
        self.assertEqual(config.benchmark.jobs, 2)
        self.assertEqual(config.benchmark.seeds, 2)
        args = parser.parse_args(['simulate', '--seed', '-1'])
        with self.assertRaises(ConfigError) as context:
            resolve_config(args)
        self.assertEqual(context.exception.path, 'seed')

    def test_build_parser(self):
        self.assertIn('default configuration', build_parser().epilog)
        with redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as context:
                build_parser().parse_args(['estimate', '--filter', 'pf'])
        self.assertEqual(context.exception.code, 2)


class StreamChannelsTest(unittest.TestCase):

    def test_stream_channels(self):
        stream = SensorStream([0.0, 0.001, 0.002], [0.0] * 3, [0.0] * 3,
                              [600.0, np.nan, 700.0])
        channels = stream_channels(stream, [0.1] * 3, PlantParams(mass=70.0))
        np.testing.assert_allclose(channels['force_plate'],
                                   (600.0, 650.0, 700.0))
        np.testing.assert_allclose(channels['grf'], 686.7)
        self.assertNotIn('knee_angle', channels)


class MainTest(unittest.TestCase):

    def test_main_usage_errors(self):
        with tempfile.TemporaryDirectory() as directory:
            for argv in (['estimate', '--filter', 'hybrid'],
                         ['estimate', '--truth', 'truth.csv'],
                         ['train']):
                with redirect_stderr(io.StringIO()):
                    with self.assertRaises(SystemExit) as context:
                        main(argv + ['--out', directory])
                self.assertEqual(context.exception.code, 2, msg=argv)

    def test_main_config_error(self):
        with tempfile.TemporaryDirectory() as directory:
            path = write_config(directory, 'plant: {dt: 0}\n')
            code, _, err = run('simulate', '--config', path, '--out',
                               directory)
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn('plant.dt', err)

    def test_main_runtime_error(self):
        with tempfile.TemporaryDirectory() as directory:
            code, _, _ = run('train', '--data',
                             os.path.join(directory, 'missing'), '--out',
                             directory)
        self.assertEqual(code, 1)

    def test_main(self):
        with tempfile.TemporaryDirectory() as directory:
            path = write_config(directory)
            out = os.path.join(directory, 'out')
            code, _, _ = run('simulate', '--config', path, '--out', out)
            self.assertEqual(code, EXIT_OK)
            for name in ('truth', 'sensors', 'dataset', 'raw'):
                for index in range(2):
                    self.assertTrue(os.path.isfile(
                        os.path.join(out, f'{name}_walking_2_{index}.csv')
                    ))
            self.assertTrue(os.path.isfile(os.path.join(out, 'config.yaml')))
            self.assertTrue(os.path.isfile(
                os.path.join(out, 'config.source.yaml')
            ))

            code, stdout, _ = run(
                'estimate', '--filter', 'kf', '--config', path, '--out', out,
                '--sensors', os.path.join(out, 'sensors_walking_2_0.csv'),
                '--truth', os.path.join(out, 'truth_walking_2_0.csv')
            )
            self.assertEqual(code, EXIT_OK)
            summary = json.loads(stdout)
            self.assertEqual(summary['filter'], 'kf')
            self.assertGreater(summary['samples'], 0)
            self.assertLess(summary['rmse_pct_f_z'], 50.0)
            self.assertTrue(os.path.isfile(summary['trace']))

            model = os.path.join(directory, 'lstm.pstlstm')
            code, _, _ = run('train', '--config', path, '--out', out,
                             '--data', out, '--model', model)
            self.assertEqual(code, EXIT_OK)
            self.assertTrue(os.path.isfile(os.path.join(out,
                                                        'train_log.csv')))
            code, stdout, _ = run('estimate', '--filter', 'lstm', '--config',
                                  path, '--out', out, '--model', model)
            self.assertEqual(code, EXIT_OK)
            self.assertIn('rmse_theta', json.loads(stdout))

            hybrid = os.path.join(directory, 'hybrid.pstlstm')
            code, _, _ = run('train', '--hybrid', '--config', path, '--out',
                             out, '--data', out, '--model', hybrid)
            self.assertEqual(code, EXIT_OK)
            code, stdout, _ = run('estimate', '--filter', 'hybrid',
                                  '--config', path, '--out', out, '--model',
                                  hybrid)
            self.assertEqual(code, EXIT_OK)
            summary = json.loads(stdout)
            self.assertTrue(np.isfinite(summary['rmse_f_z']))

    def test_main_train_sheets(self):
        with tempfile.TemporaryDirectory() as directory:
            sheets = os.path.join(directory, 'sheets')
            os.makedirs(sheets)
            write_sheets(sheets)
            out = os.path.join(directory, 'out')
            code, _, err = run('train', '--data', sheets, '--out', out)
            self.assertEqual(code, 1)
            self.assertIn('knee_angle', err)
            path = write_config(directory, SHEETS_RUN)
            model = os.path.join(directory, 'sheets.pstlstm')
            code, _, _ = run('train', '--config', path, '--data', sheets,
                             '--out', out, '--model', model)
            self.assertEqual(code, EXIT_OK)
            self.assertTrue(os.path.isfile(model))

    def test_main_benchmark_determinism(self):
        reports = []
        with tempfile.TemporaryDirectory() as directory:
            for name in ('first', 'second'):
                out = os.path.join(directory, name)
                code, _, _ = run('benchmark', '--quick', '--seed', '7',
                                 '--out', out)
                self.assertEqual(code, EXIT_OK)
                files = {}
                for csv in sorted(os.listdir(out)):
                    if csv.endswith('.csv'):
                        with open(os.path.join(out, csv), 'rb') as file:
                            files[csv] = file.read()
                reports.append(files)
        self.assertIn('report.csv', reports[0])
        self.assertIn('baselines.csv', reports[0])
        self.assertEqual(reports[0], reports[1])
