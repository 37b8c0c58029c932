"""
Shared plumbing for the experiment commands: flags, config-file merging,
validation, persistence and the run manifest.
"""
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError

from core.models import ExperimentRun
from losslab.config import read_config_file
from losslab.exceptions import LabError
from losslab.serializers import ExperimentConfigSerializer

# (flag, type, help); dest is the flag with dashes turned into underscores.
CONFIG_FLAGS = (
    ('--dataset', str, 'Dataset CSV; synthetic data is generated when omitted.'),
    ('--n-subjects', int, 'Synthetic subjects.'),
    ('--images-per-subject', int, 'Synthetic samples per subject.'),
    ('--d-in', int, 'Feature width.'),
    ('--feature-noise', float, 'Std of per-image feature noise.'),
    ('--sigma-low', float, 'Smallest apparent-age std.'),
    ('--sigma-high', float, 'Largest apparent-age std.'),
    ('--data-seed', int, 'Seed of the synthetic dataset.'),
    ('--loss', str, 'Loss selector.'),
    ('--lambda1', float, 'Weight of the mean loss.'),
    ('--lambda2', float, 'Weight of the residue (or variance) loss.'),
    ('--k', str, "Top-K size or 'adaptive'."),
    ('--lr', float, 'Base learning rate.'),
    ('--batch-size', int, 'Minibatch size.'),
    ('--epochs', int, 'Training epochs.'),
    ('--decay-every', int, 'Epochs between learning-rate decays.'),
    ('--decay-factor', float, 'Learning-rate decay factor.'),
    ('--hidden', str, 'Comma separated hidden layer widths.'),
    ('--protocol', str, "Evaluation protocol: 'holdout' or 'lopo'."),
    ('--holdout', float, 'Fraction of subjects held out.'),
    ('--lopo-max-subjects', int, 'Subjects used by leave-one-person-out.'),
    ('--seeds', str, 'Comma separated run seeds.'),
    ('--output-dir', str, 'Directory for reports (default LOSSLAB_OUTPUT_DIR).'),
)
BOOLEAN_FLAGS = (
    ('--round-predictions', 'Round predicted ages to whole classes.'),
    ('--clamp', 'Clamp predicted ages to the class range.'),
)


def _dest(flag):
    return flag.lstrip('-').replace('-', '_')


class ExperimentCommand(BaseCommand):
    """Base class of commands driven by an experiment configuration."""
    command_name = None
    persist_runs = False

    def add_arguments(self, parser):
        parser.add_argument('--config', help='key = value configuration file.')
        for flag, kind, text in CONFIG_FLAGS:
            parser.add_argument(flag, type=kind, default=None, help=text)
        for flag, text in BOOLEAN_FLAGS:
            parser.add_argument(
                flag, action='store_const', const=True, default=None, help=text
            )
        if self.persist_runs:
            parser.add_argument(
                '--no-persist', action='store_true',
                help='Do not record runs in the database.',
            )
            parser.add_argument(
                '--workers', type=int, default=settings.LOSSLAB_WORKERS,
                help='Worker processes for independent runs.',
            )

    def configure_logging(self, verbosity):
        if verbosity >= 2:
            logging.getLogger('losslab').setLevel(logging.DEBUG)
        elif verbosity == 0:
            logging.getLogger('losslab').setLevel(logging.WARNING)

    def merged_options(self, options):
        """Config file values overridden by explicitly given flags."""
        names = [_dest(flag) for flag, _, _ in CONFIG_FLAGS]
        names += [_dest(flag) for flag, _ in BOOLEAN_FLAGS]
        values = {}
        if options.get('config'):
            try:
                values.update(read_config_file(options['config']))
            except (OSError, LabError) as exc:
                raise CommandError(f'Cannot read config file: {exc}')
            unknown = sorted(set(values) - set(names))
            if unknown:
                raise CommandError(f'Unknown config keys: {", ".join(unknown)}')
        for name in names:
            if options.get(name) is not None:
                values[name] = options[name]
        return values

    def build_config(self, options):
        serializer = ExperimentConfigSerializer(data=self.merged_options(options))
        if not serializer.is_valid():
            errors = '; '.join(
                f'{field}: {" ".join(str(m) for m in messages)}'
                for field, messages in serializer.errors.items()
            )
            raise CommandError(f'Invalid configuration: {errors}')
        try:
            return serializer.to_config()
        except LabError as exc:
            raise CommandError(f'Invalid configuration: {exc}')

    def output_dir(self, cfg):
        path = Path(cfg.output_dir)
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CommandError(f'Cannot create output directory {path}: {exc}')
        return path

    def persist(self, reports, options):
        """Record reports in the database unless ``--no-persist`` was given."""
        if options.get('no_persist'):
            return []
        try:
            return [
                ExperimentRun.objects.create_from_report(report, self.command_name)
                for report in reports
            ]
        except DatabaseError as exc:
            self.stderr.write(f'Runs not recorded in the database: {exc}')
            return []

    def handle(self, *args, **options):
        self.configure_logging(options['verbosity'])
        cfg = self.build_config(options)
        try:
            self.run(cfg, options)
        except (LabError, OSError) as exc:
            raise CommandError(str(exc))

    def run(self, cfg, options):
        raise NotImplementedError
