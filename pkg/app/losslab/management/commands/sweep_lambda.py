"""
Django command to sweep the residue weight lambda2.
"""
from django.core.management.base import CommandError
from rest_framework.exceptions import ValidationError

from losslab.config import DEFAULT_LAMBDA2_GRID
from losslab.harness import sweep_lambda2
from losslab.reports import emit_report, write_manifest
from losslab.serializers import parse_lambda_grid

from ._experiment import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Train the adaptive mean-residue loss over a grid of lambda2 values.'
    command_name = 'sweep_lambda'
    persist_runs = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--grid', default=','.join(repr(v) for v in DEFAULT_LAMBDA2_GRID),
            help='Comma separated lambda2 values.',
        )

    def run(self, cfg, options):
        try:
            grid = parse_lambda_grid(options['grid'])
        except ValidationError as exc:
            raise CommandError(f'Invalid --grid: {" ".join(exc.detail)}')
        output_dir = self.output_dir(cfg)
        table = sweep_lambda2(cfg, grid, cfg.seeds, workers=options['workers'])
        files = emit_report(table, output_dir, 'sweep_lambda2')
        for row in table.rows:
            self.stdout.write(
                f'lambda2={row.key:<8} MAE {row.mae_mean:.4f}  eps {row.eps_mean:.4f}'
            )
        self.persist(
            [report for group in table.reports.values() for report in group], options
        )
        write_manifest(
            output_dir, self.command_name, cfg.echo(), cfg.seeds, files,
            extra={'grid': list(grid)},
        )
        self.stdout.write(self.style.SUCCESS(f'Sweep written to {output_dir}'))
