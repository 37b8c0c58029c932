"""
Django command to compare fixed top-K sizes with the adaptive K.
"""
from django.core.management.base import CommandError
from rest_framework.exceptions import ValidationError

from losslab.config import DEFAULT_K_VALUES
from losslab.harness import sweep_k
from losslab.reports import emit_report, write_manifest, write_trajectory
from losslab.serializers import parse_k_values

from ._experiment import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Train the mean-residue loss for each fixed K plus the adaptive K.'
    command_name = 'sweep_k'
    persist_runs = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--k-values', default=','.join(str(k) for k in DEFAULT_K_VALUES),
            help='Comma separated fixed K values; adaptive is always added.',
        )

    def run(self, cfg, options):
        try:
            k_values = parse_k_values(options['k_values'])
        except ValidationError as exc:
            raise CommandError(f'Invalid --k-values: {" ".join(exc.detail)}')
        output_dir = self.output_dir(cfg)
        table = sweep_k(cfg, k_values, cfg.seeds, workers=options['workers'])
        files = emit_report(table, output_dir, 'sweep_k')
        files.append(write_trajectory(table, output_dir, 'sweep_k_trajectory'))
        for row in table.rows:
            self.stdout.write(
                f'k={row.key:<9} MAE {row.mae_mean:.4f}  eps {row.eps_mean:.4f}'
            )
        self.persist(
            [report for group in table.reports.values() for report in group], options
        )
        write_manifest(
            output_dir, self.command_name, cfg.echo(), cfg.seeds, files,
            extra={
                'k_values': [str(k) for k in k_values if not k.is_adaptive] + ['adaptive'],
            },
        )
        self.stdout.write(self.style.SUCCESS(f'Sweep written to {output_dir}'))
