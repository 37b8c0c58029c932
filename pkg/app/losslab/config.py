"""
Experiment configuration and the key=value config file format.

A config file holds one ``key = value`` pair per line; ``#`` starts a
comment. Keys are the command-line flag names, with dashes or underscores.
"""
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from losslab.data import N_CLASSES, SyntheticConfig
from losslab.exceptions import ConfigError
from losslab.losses import KMode, LossKind, LossWeights
from losslab.network import SgdConfig

HOLDOUT = 'holdout'
LOPO = 'lopo'
PROTOCOLS = (HOLDOUT, LOPO)

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_HIDDEN = (64, 32)
DEFAULT_LAMBDA2_GRID = tuple(round(0.025 * i, 3) for i in range(9))
DEFAULT_K_VALUES = (2, 3, 5, 8, 13)


def desk_sgd():
    """Desk-scale schedule: 60 epochs, x0.1 every 10."""
    return SgdConfig(base_lr=0.01, batch_size=64, epochs=60, decay_every=10)


@dataclass(frozen=True)
class ExperimentConfig:
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    dataset_path: str = None
    loss: LossKind = LossKind.AMR
    weights: LossWeights = LossWeights(0.2, 0.05)
    kmode: KMode = KMode.adaptive()
    sgd: SgdConfig = field(default_factory=desk_sgd)
    hidden: tuple = DEFAULT_HIDDEN
    protocol: str = HOLDOUT
    holdout_fraction: float = 0.2
    lopo_max_subjects: int = 200
    seeds: tuple = DEFAULT_SEEDS
    output_dir: str = 'runs'
    round_predictions: bool = False
    clamp: bool = False

    @property
    def n_classes(self):
        return N_CLASSES

    @property
    def layer_sizes(self):
        return (self.synthetic.d_in,) + tuple(self.hidden) + (self.n_classes,)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def validate(self):
        """Raise :class:`ConfigError` for inconsistent settings."""
        if not self.seeds:
            raise ConfigError('at least one seed is required')
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f'unknown protocol {self.protocol!r}')
        if self.protocol == HOLDOUT and not 0 < self.holdout_fraction < 1:
            raise ConfigError(
                f'holdout fraction must lie in (0, 1), got {self.holdout_fraction}'
            )
        if not self.kmode.is_adaptive and not 1 <= self.kmode.k <= self.n_classes:
            raise ConfigError(
                f'fixed k={self.kmode.k} outside 1..{self.n_classes}'
            )
        if any(int(width) < 1 for width in self.hidden):
            raise ConfigError(f'hidden widths must be positive, got {self.hidden}')
        if self.lopo_max_subjects < 2:
            raise ConfigError('lopo_max_subjects must be at least 2')
        return self

    def echo(self):
        """JSON-friendly description used in manifests and run records."""
        return {
            'dataset': self.dataset_path,
            'synthetic': {
                'n_subjects': self.synthetic.n_subjects,
                'images_per_subject': self.synthetic.images_per_subject,
                'd_in': self.synthetic.d_in,
                'feature_noise': self.synthetic.feature_noise,
                'sigma_range': list(self.synthetic.sigma_range),
                'seed': self.synthetic.seed,
            },
            'loss': LossKind(self.loss).value,
            'lambda1': self.weights.lambda1,
            'lambda2': self.weights.lambda2,
            'k': str(self.kmode),
            'sgd': dataclasses.asdict(self.sgd),
            'hidden': list(self.hidden),
            'protocol': self.protocol,
            'holdout_fraction': self.holdout_fraction,
            'lopo_max_subjects': self.lopo_max_subjects,
            'seeds': list(self.seeds),
            'round_predictions': self.round_predictions,
            'clamp': self.clamp,
        }


def read_config_file(path):
    """Parse a key=value file into a dict of strings keyed by option name."""
    values = {}
    with open(Path(path)) as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition('=')
            key = key.strip().replace('-', '_')
            if not sep or not key:
                raise ConfigError(f'{path}:{line_number}: expected key = value')
            values[key] = value.strip()
    return values
