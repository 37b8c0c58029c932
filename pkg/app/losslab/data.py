"""
Synthetic age data, CSV persistence, subject-level splits and batching.

Ages are integers 0..69; the network sees class ``age + 1`` in 1..70.
"""
import csv
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from losslab.exceptions import (
    DatasetParseError,
    DatasetValidationError,
    InputError,
)
from losslab.numerics import RngStream

logger = logging.getLogger(__name__)

MIN_AGE = 0
MAX_AGE = 69
N_CLASSES = MAX_AGE - MIN_AGE + 1
BASE_COLUMNS = ('sample_id', 'subject_id', 'age', 'sigma')


def age_to_class(age):
    return age - MIN_AGE + 1


@dataclass(frozen=True)
class Sample:
    sample_id: int
    subject_id: int
    age: int
    sigma: float
    features: tuple

    def __post_init__(self):
        if not MIN_AGE <= self.age <= MAX_AGE:
            raise DatasetValidationError(
                f'age {self.age} outside {MIN_AGE}..{MAX_AGE} (sample {self.sample_id})'
            )
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise DatasetValidationError(
                f'sigma must be positive (sample {self.sample_id})'
            )
        features = tuple(float(value) for value in self.features)
        if not all(np.isfinite(features)):
            raise DatasetValidationError(
                f'non-finite feature (sample {self.sample_id})'
            )
        object.__setattr__(self, 'age', int(self.age))
        object.__setattr__(self, 'sigma', float(self.sigma))
        object.__setattr__(self, 'features', features)

    @property
    def label(self):
        return age_to_class(self.age)


class Batch(NamedTuple):
    features: np.ndarray
    labels: np.ndarray
    sigmas: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Immutable, ordered collection of samples of equal feature width."""
    samples: tuple

    def __post_init__(self):
        samples = tuple(self.samples)
        widths = {len(sample.features) for sample in samples}
        if len(widths) > 1:
            raise DatasetValidationError(f'mixed feature widths {sorted(widths)}')
        object.__setattr__(self, 'samples', samples)

    def __len__(self):
        return len(self.samples)

    @property
    def n_features(self):
        return len(self.samples[0].features) if self.samples else 0

    @cached_property
    def features(self):
        return np.array(
            [sample.features for sample in self.samples], dtype=np.float64
        ).reshape(len(self.samples), self.n_features)

    @cached_property
    def labels(self):
        return np.array([sample.label for sample in self.samples], dtype=np.int64)

    @cached_property
    def sigmas(self):
        return np.array([sample.sigma for sample in self.samples], dtype=np.float64)

    @cached_property
    def subject_ids(self):
        """Distinct subjects in order of first appearance."""
        return tuple(dict.fromkeys(sample.subject_id for sample in self.samples))

    def subset(self, indices):
        return Dataset(tuple(self.samples[i] for i in indices))

    def select_subjects(self, subject_ids):
        wanted = set(subject_ids)
        return Dataset(tuple(s for s in self.samples if s.subject_id in wanted))


@dataclass(frozen=True)
class SyntheticConfig:
    n_subjects: int = 2000
    images_per_subject: int = 1
    d_in: int = 64
    feature_noise: float = 0.1
    sigma_range: tuple = (2.0, 6.0)
    seed: int = 0

    def __post_init__(self):
        for name in ('n_subjects', 'images_per_subject', 'd_in'):
            if int(getattr(self, name)) < 1:
                raise InputError(f'{name} must be a positive integer')
        if self.feature_noise < 0:
            raise InputError('feature_noise must be >= 0')
        low, high = self.sigma_range
        if not 0 < low <= high:
            raise InputError(f'invalid sigma_range {self.sigma_range}')
        object.__setattr__(self, 'sigma_range', (float(low), float(high)))


def _age_basis(ages):
    """Low-order polynomial and sinusoidal basis of the normalised age."""
    t = 2.0 * (np.asarray(ages, dtype=np.float64) - MIN_AGE) / (MAX_AGE - MIN_AGE) - 1.0
    columns = [t, t ** 2, t ** 3]
    for frequency in (1, 2, 3):
        columns.extend((np.sin(frequency * np.pi * t), np.cos(frequency * np.pi * t)))
    return np.stack(columns, axis=1)


def generate_dataset(cfg):
    """
    Subjects with a uniform age and apparent-age sigma, seen through a fixed
    random embedding of their age plus per-image Gaussian noise.
    """
    rng = RngStream(cfg.seed)
    embedding_rng, subject_rng, noise_rng = rng.derive(1), rng.derive(2), rng.derive(3)

    n_basis = _age_basis([MIN_AGE]).shape[1]
    projection = embedding_rng.normal(
        scale=1.0 / np.sqrt(n_basis), size=(cfg.d_in, n_basis)
    )
    ages = subject_rng.integers(MIN_AGE, MAX_AGE, size=cfg.n_subjects)
    sigmas = subject_rng.uniform(*cfg.sigma_range, size=cfg.n_subjects)
    clean = _age_basis(ages) @ projection.T

    samples = []
    for subject in range(cfg.n_subjects):
        for _ in range(cfg.images_per_subject):
            features = clean[subject]
            if cfg.feature_noise > 0:
                features = features + noise_rng.normal(cfg.feature_noise, size=cfg.d_in)
            samples.append(Sample(
                sample_id=len(samples),
                subject_id=subject,
                age=int(ages[subject]),
                sigma=float(sigmas[subject]),
                features=features,
            ))
    logger.info(
        'Generated %d samples from %d subjects (seed %d)',
        len(samples), cfg.n_subjects, cfg.seed,
    )
    return Dataset(tuple(samples))


def lopo_splits(ds):
    """Leave-one-person-out: one ``(train, test)`` pair per subject."""
    subjects = ds.subject_ids
    if len(subjects) < 2:
        raise InputError('leave-one-person-out needs at least two subjects')
    splits = []
    for subject in subjects:
        test = ds.select_subjects([subject])
        train = Dataset(tuple(s for s in ds.samples if s.subject_id != subject))
        splits.append((train, test))
    return splits


def holdout_split(ds, fraction, rng):
    """Hold out a random ``fraction`` of subjects (at least one each side)."""
    if not 0 < fraction < 1:
        raise InputError(f'holdout fraction must lie in (0, 1), got {fraction}')
    subjects = ds.subject_ids
    if len(subjects) < 2:
        raise InputError('a holdout split needs at least two subjects')
    n_test = min(max(1, int(round(fraction * len(subjects)))), len(subjects) - 1)
    order = rng.permutation(len(subjects))
    test_subjects = {subjects[i] for i in order[:n_test]}
    train = Dataset(tuple(s for s in ds.samples if s.subject_id not in test_subjects))
    test = Dataset(tuple(s for s in ds.samples if s.subject_id in test_subjects))
    return train, test


def batches(ds, batch_size, rng):
    """Shuffle once with ``rng`` and cut contiguous batches; the last may be short."""
    if batch_size < 1:
        raise InputError(f'batch_size must be >= 1, got {batch_size}')
    if not len(ds):
        raise InputError('cannot batch an empty dataset')
    order = rng.permutation(len(ds))
    features, labels, sigmas = ds.features, ds.labels, ds.sigmas
    return [
        Batch(features[chunk], labels[chunk], sigmas[chunk])
        for chunk in (order[start:start + batch_size] for start in range(0, len(ds), batch_size))
    ]


def csv_header(n_features):
    return list(BASE_COLUMNS) + [f'f{i}' for i in range(1, n_features + 1)]


def save_csv(ds, path):
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(csv_header(ds.n_features))
        for sample in ds.samples:
            writer.writerow(
                [sample.sample_id, sample.subject_id, sample.age, repr(sample.sigma)]
                + [repr(value) for value in sample.features]
            )
    logger.info('Wrote %d samples to %s', len(ds), path)


def _parse_row(row, n_features, line_number):
    if len(row) != len(BASE_COLUMNS) + n_features:
        raise DatasetParseError(
            f'expected {len(BASE_COLUMNS) + n_features} fields, got {len(row)}',
            line_number,
        )
    try:
        sample_id, subject_id, age = (int(value) for value in row[:3])
        sigma = float(row[3])
        features = tuple(float(value) for value in row[4:])
    except ValueError as exc:
        raise DatasetParseError(str(exc), line_number) from exc
    try:
        return Sample(sample_id, subject_id, age, sigma, features)
    except DatasetValidationError as exc:
        raise DatasetValidationError(str(exc), line_number) from exc


def load_csv(path):
    with open(path, newline='') as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DatasetParseError('file is empty', 1)
        n_features = len(header) - len(BASE_COLUMNS)
        if n_features < 0 or header != csv_header(n_features):
            raise DatasetParseError(f'unexpected header {header}', 1)
        samples = [
            _parse_row(row, n_features, line_number)
            for line_number, row in enumerate(reader, start=2)
        ]
    logger.info('Read %d samples from %s', len(samples), path)
    return Dataset(tuple(samples))
