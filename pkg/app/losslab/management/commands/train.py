"""
Django command to train one loss configuration for every seed.
"""
from losslab.harness import load_dataset, run_many
from losslab.network import save_params
from losslab.reports import emit_report, write_manifest

from ._experiment import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Train and evaluate one configuration; one report per seed.'
    command_name = 'train'
    persist_runs = True

    def run(self, cfg, options):
        output_dir = self.output_dir(cfg)
        dataset = load_dataset(cfg)
        reports = run_many(
            [(cfg, seed, dataset) for seed in cfg.seeds], options['workers']
        )
        files = []
        for report in reports:
            stem = f'run_seed{report.seed}'
            files.extend(emit_report(report, output_dir, stem))
            if report.params is not None:
                path = output_dir / f'params_seed{report.seed}.json'
                save_params(report.params, path)
                files.append(path)
            self.stdout.write(
                f'seed {report.seed}: MAE {report.summary.final_mae:.4f}, '
                f'eps {report.summary.final_eps:.4f}'
            )
        self.persist(reports, options)
        write_manifest(output_dir, self.command_name, cfg.echo(), cfg.seeds, files)
        self.stdout.write(self.style.SUCCESS(f'Reports written to {output_dir}'))
