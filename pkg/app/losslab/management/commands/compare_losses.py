"""
Django command to compare the six loss combinations.
"""
from losslab.harness import compare_losses
from losslab.reports import emit_report, write_manifest

from ._experiment import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Train every loss combination on the same data and seeds.'
    command_name = 'compare_losses'
    persist_runs = True

    def run(self, cfg, options):
        output_dir = self.output_dir(cfg)
        table = compare_losses(cfg, cfg.seeds, workers=options['workers'])
        files = emit_report(table, output_dir, 'compare_losses')
        for row in table.rows:
            self.stdout.write(
                f'{row.key:<18} MAE {row.mae_mean:.4f} ± {row.mae_std:.4f}  '
                f'eps {row.eps_mean:.4f} ± {row.eps_std:.4f}'
            )
        self.persist(
            [report for group in table.reports.values() for report in group], options
        )
        write_manifest(output_dir, self.command_name, cfg.echo(), cfg.seeds, files)
        self.stdout.write(self.style.SUCCESS(f'Table written to {output_dir}'))
