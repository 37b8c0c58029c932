"""
Django command to generate a synthetic age dataset.
"""
from losslab.data import save_csv, generate_dataset
from losslab.reports import write_manifest

from ._experiment import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Generate a synthetic dataset and write dataset.csv.'
    command_name = 'gen_data'

    def run(self, cfg, options):
        output_dir = self.output_dir(cfg)
        dataset = generate_dataset(cfg.synthetic)
        path = output_dir / 'dataset.csv'
        save_csv(dataset, path)
        write_manifest(
            output_dir, self.command_name, cfg.echo(), [cfg.synthetic.seed], [path],
            extra={'samples': len(dataset)},
        )
        self.stdout.write(self.style.SUCCESS(
            f'Wrote {len(dataset)} samples to {path}'
        ))
