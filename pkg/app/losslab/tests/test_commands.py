"""
Test the experiment management commands.
"""
import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest.mock import patch

from django.core.management import call_command
from django.core.management.base import CommandError
from django.db import DatabaseError
from django.test import SimpleTestCase, TestCase

from core.models import ExperimentRun
from losslab.data import load_csv
from losslab.network import load_params
from losslab.reports import read_csv_rows

TINY = [
    '--n-subjects=24', '--d-in=5', '--hidden=6', '--epochs=2',
    '--batch-size=8', '--lr=0.05', '--workers=1', '--verbosity=0',
]


class CommandTestMixin:

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def call(self, name, *args):
        stdout = StringIO()
        call_command(name, *args, f'--output-dir={self.out}', stdout=stdout)
        return stdout.getvalue()

    def manifest(self):
        return json.loads((self.out / 'manifest.json').read_text())


class TrainCommandTests(CommandTestMixin, TestCase):
    """Test the train command."""

    def test_train_writes_reports_and_records_runs(self):
        """Test train writes reports and records runs."""
        output = self.call('train', *TINY, '--seeds=0,1')

        self.assertIn('seed 1: MAE', output)
        for seed in (0, 1):
            header, rows = read_csv_rows(self.out / f'run_seed{seed}.csv')
            self.assertEqual(header[0], 'epoch')
            self.assertEqual(len(rows), 2)
            self.assertTrue((self.out / f'run_seed{seed}.svg').exists())
            params = load_params(self.out / f'params_seed{seed}.json')
            self.assertEqual(params.layer_sizes, (5, 6, 70))
        manifest = self.manifest()
        self.assertEqual(manifest['command'], 'train')
        self.assertEqual(manifest['seeds'], [0, 1])
        self.assertIn('run_seed0.csv', manifest['files'])

        runs = ExperimentRun.objects.all()
        self.assertEqual(runs.count(), 2)
        self.assertEqual(runs[0].command, 'train')
        self.assertEqual(runs[0].epochs.count(), 2)

    def test_no_persist(self):
        """Test --no-persist skips the database."""
        self.call('train', *TINY, '--seeds=0', '--no-persist')

        self.assertFalse(ExperimentRun.objects.exists())

    def test_repeat_run_identical(self):
        """Test repeating train reproduces its files."""
        self.call('train', *TINY, '--seeds=3', '--no-persist')
        first = (self.out / 'run_seed3.csv').read_bytes()
        manifest = (self.out / 'manifest.json').read_bytes()

        self.call('train', *TINY, '--seeds=3', '--no-persist')

        self.assertEqual((self.out / 'run_seed3.csv').read_bytes(), first)
        self.assertEqual((self.out / 'manifest.json').read_bytes(), manifest)

    def test_config_file_overridden_by_flags(self):
        """Test flags override config file values."""
        config = self.out / 'run.cfg'
        config.write_text('loss = softmax\nseeds = 5\nepochs = 1\n')

        self.call('train', *TINY, f'--config={config}', '--no-persist')

        manifest = self.manifest()
        self.assertEqual(manifest['config']['loss'], 'softmax')
        self.assertEqual(manifest['seeds'], [5])
        self.assertEqual(manifest['config']['sgd']['epochs'], 2)

    @patch('core.models.ExperimentRunManager.create_from_report')
    def test_database_failure_keeps_files(self, patched_create):
        """Test a database error still leaves the reports."""
        patched_create.side_effect = DatabaseError('no such table')
        stderr = StringIO()

        call_command(
            'train', *TINY, '--seeds=0', f'--output-dir={self.out}',
            stdout=StringIO(), stderr=stderr,
        )

        self.assertIn('Runs not recorded', stderr.getvalue())
        self.assertTrue((self.out / 'run_seed0.csv').exists())


class ConfigErrorTests(CommandTestMixin, SimpleTestCase):
    """Test rejected configurations."""

    def test_invalid_values(self):
        """Test invalid flag values raise a command error."""
        bad = [
            ['--loss=hinge'],
            ['--k=0'],
            ['--lambda2=-1'],
            ['--seeds=a,b'],
            ['--hidden=0'],
        ]
        for flags in bad:
            with self.subTest(flags=flags):
                with self.assertRaisesRegex(CommandError, 'Invalid configuration'):
                    self.call('train', *TINY, *flags, '--no-persist')

    def test_unknown_config_key(self):
        """Test unknown config file keys are rejected."""
        config = self.out / 'bad.cfg'
        config.write_text('learning_rate = 0.1\n')

        with self.assertRaisesRegex(CommandError, 'learning_rate'):
            self.call('train', f'--config={config}', '--no-persist')

    def test_missing_dataset(self):
        """Test a missing dataset file raises a command error."""
        with self.assertRaises(CommandError):
            self.call('train', *TINY, f'--dataset={self.out / "none.csv"}', '--no-persist')

    def test_bad_sweep_lists(self):
        """Test invalid sweep lists raise a command error."""
        with self.assertRaisesRegex(CommandError, 'grid'):
            self.call('sweep_lambda', *TINY, '--grid=0.1,-0.2', '--no-persist')
        with self.assertRaisesRegex(CommandError, 'k-values'):
            self.call('sweep_k', *TINY, '--k-values=2,99', '--no-persist')


class DataCommandTests(CommandTestMixin, SimpleTestCase):
    """Test dataset generation and training from a file."""

    def test_gen_data_then_train(self):
        """Test training on a generated dataset file."""
        self.call('gen_data', '--n-subjects=20', '--d-in=5', '--data-seed=4')

        dataset = load_csv(self.out / 'dataset.csv')
        self.assertEqual(len(dataset), 20)
        self.assertEqual(dataset.n_features, 5)
        self.assertEqual(self.manifest()['samples'], 20)

        self.call(
            'train', *TINY, '--seeds=0', '--no-persist',
            f'--dataset={self.out / "dataset.csv"}',
        )
        self.assertTrue((self.out / 'run_seed0.csv').exists())


class SweepCommandTests(CommandTestMixin, SimpleTestCase):
    """Test the table-producing commands."""

    def test_compare_losses(self):
        """Test compare_losses writes one row per loss."""
        self.call('compare_losses', *TINY, '--seeds=0', '--no-persist')

        header, rows = read_csv_rows(self.out / 'compare_losses.csv')
        self.assertEqual(header[0], 'loss')
        self.assertEqual(
            [row[0] for row in rows],
            ['softmax', 'mean+softmax', 'variance+softmax', 'mean-variance',
             'residue+softmax', 'amr'],
        )
        self.assertTrue((self.out / 'compare_losses.svg').exists())

    def test_sweep_lambda(self):
        """Test sweep_lambda writes one row per grid value."""
        self.call('sweep_lambda', *TINY, '--seeds=0', '--grid=0,0.1', '--no-persist')

        header, rows = read_csv_rows(self.out / 'sweep_lambda2.csv')
        self.assertEqual(header[0], 'lambda2')
        self.assertEqual([row[0] for row in rows], [0.0, 0.1])
        self.assertEqual(self.manifest()['grid'], [0.0, 0.1])

    def test_sweep_k(self):
        """Test sweep_k writes the table and trajectory."""
        self.call('sweep_k', *TINY, '--seeds=0', '--k-values=2,adaptive,3', '--no-persist')

        header, rows = read_csv_rows(self.out / 'sweep_k.csv')
        self.assertEqual(header[-1], 'overcentralized_mean')
        self.assertEqual([row[0] for row in rows], [2.0, 3.0, 'adaptive'])
        _, trajectory = read_csv_rows(self.out / 'sweep_k_trajectory.csv')
        self.assertEqual([row[0] for row in trajectory], [1.0, 2.0])
        self.assertEqual(self.manifest()['k_values'], ['2', '3', 'adaptive'])


class GradcheckCommandTests(CommandTestMixin, SimpleTestCase):
    """Test the gradient check command."""

    def test_small_suite_passes(self):
        """Test a small gradient check passes."""
        output = self.call('gradcheck', '--cases=3', '--classes=12')

        self.assertIn('All gradients within tolerance', output)
        _, rows = read_csv_rows(self.out / 'gradcheck.csv')
        self.assertEqual(len(rows), 7)
        self.assertTrue(all(row[2] < 1e-4 for row in rows))

    def test_impossible_tolerance_fails(self):
        """Test a zero tolerance fails the check."""
        with self.assertRaisesRegex(CommandError, 'Gradient check failed'):
            self.call('gradcheck', '--cases=1', '--classes=12', '--tolerance=0')

    def test_too_few_classes(self):
        """Test too few classes are rejected."""
        with self.assertRaises(CommandError):
            self.call('gradcheck', '--classes=3')


class RepeatabilityTests(CommandTestMixin, SimpleTestCase):
    """Test repeated commands reproduce their files byte for byte."""

    def run_into(self, directory, name, *args):
        call_command(name, *args, f'--output-dir={self.out / directory}', stdout=StringIO())
        return self.out / directory

    def assert_same_files(self, first, second, names):
        for name in names + ['manifest.json']:
            with self.subTest(file=name):
                self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())

    def assert_repeatable(self, name, args, names):
        first = self.run_into('first', name, *args)
        second = self.run_into('second', name, *args)
        self.assert_same_files(first, second, names)

    def test_gen_data(self):
        """Test gen_data writes the same dataset twice."""
        self.assert_repeatable(
            'gen_data', ['--n-subjects=20', '--d-in=5', '--data-seed=9'], ['dataset.csv']
        )

    def test_gradcheck(self):
        """Test gradcheck writes the same error table twice."""
        self.assert_repeatable('gradcheck', ['--cases=2', '--classes=12'], ['gradcheck.csv'])

    def test_compare_losses(self):
        """Test compare_losses writes the same table and chart twice."""
        self.assert_repeatable(
            'compare_losses', TINY + ['--seeds=0', '--no-persist'],
            ['compare_losses.csv', 'compare_losses.svg'],
        )

    def test_sweep_lambda(self):
        """Test sweep_lambda writes the same table and chart twice."""
        self.assert_repeatable(
            'sweep_lambda', TINY + ['--seeds=0', '--grid=0,0.1', '--no-persist'],
            ['sweep_lambda2.csv', 'sweep_lambda2.svg'],
        )

    def test_sweep_k(self):
        """Test sweep_k writes the same tables and chart twice."""
        self.assert_repeatable(
            'sweep_k', TINY + ['--seeds=0', '--k-values=2,5', '--no-persist'],
            ['sweep_k.csv', 'sweep_k.svg', 'sweep_k_trajectory.csv'],
        )

    def test_worker_count_does_not_change_outputs(self):
        """Test a worker pool gives the same files as a single process."""
        args = TINY + ['--seeds=0,1', '--no-persist']

        serial = self.run_into('serial', 'compare_losses', *args, '--workers=1')
        pooled = self.run_into('pooled', 'compare_losses', *args, '--workers=2')

        self.assert_same_files(serial, pooled, ['compare_losses.csv', 'compare_losses.svg'])
