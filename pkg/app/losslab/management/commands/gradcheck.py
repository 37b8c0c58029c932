"""
Django command to compare analytic and finite-difference loss gradients.
"""
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from losslab.harness import run_gradient_suite
from losslab.reports import write_gradcheck, write_manifest

TOLERANCE = 1e-4


class Command(BaseCommand):
    help = 'Check every loss gradient against central finite differences.'

    def add_arguments(self, parser):
        parser.add_argument('--cases', type=int, default=100)
        parser.add_argument('--batch-size', type=int, default=4)
        parser.add_argument('--classes', type=int, default=70)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--tolerance', type=float, default=TOLERANCE)
        parser.add_argument(
            '--output-dir', default=str(settings.LOSSLAB_OUTPUT_DIR)
        )

    def handle(self, *args, **options):
        if options['cases'] < 1 or options['batch_size'] < 1:
            raise CommandError('--cases and --batch-size must be positive')
        if options['classes'] < 5:
            raise CommandError('--classes must be at least 5 for the K=5 case')
        output_dir = Path(options['output_dir'])
        output_dir.mkdir(parents=True, exist_ok=True)
        rows = run_gradient_suite(
            cases=options['cases'],
            n=options['batch_size'],
            n_classes=options['classes'],
            seed=options['seed'],
        )
        path = write_gradcheck(rows, output_dir)
        write_manifest(
            output_dir, 'gradcheck',
            {
                'cases': options['cases'],
                'batch_size': options['batch_size'],
                'classes': options['classes'],
                'tolerance': options['tolerance'],
            },
            [options['seed']], [path],
        )
        failed = [row for row in rows if not row.max_rel_error < options['tolerance']]
        for row in rows:
            self.stdout.write(f'{row.loss:<18} {row.max_rel_error:.3e}')
        if failed:
            raise CommandError(
                'Gradient check failed for ' + ', '.join(row.loss for row in failed)
            )
        self.stdout.write(self.style.SUCCESS('All gradients within tolerance'))
