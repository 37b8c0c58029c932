"""
Experiment driver: training runs, the loss ablation, lambda2 and K sweeps,
and the gradient-check suite.

Every run owns random streams derived from ``(seed, stream index)``, so a
report depends only on the configuration, the dataset and the seed. Stream
indices: 2 holdout split, 3 + 2f initialisation and 4 + 2f batching of
fold f.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from losslab import FORMAT_VERSION, __version__
from losslab.config import HOLDOUT, LOPO
from losslab.data import (
    batches,
    generate_dataset,
    holdout_split,
    load_csv,
    lopo_splits,
)
from losslab.distribution import outside_mask, softmax_rows
from losslab.exceptions import ConfigError
from losslab.losses import (
    KMode,
    LossKind,
    LossWeights,
    amr_loss,
    compute_loss,
    cross_entropy_loss,
    mean_loss,
    mv_loss,
    residue_loss,
    variance_loss,
)
from losslab.metrics import evaluate
from losslab.network import forward, init_params, lr_at, train_epoch
from losslab.numerics import RngStream, finite_diff_grad, max_relative_error

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    total: float
    softmax_term: float
    mean_term: float
    tail_term: float
    median_k: float
    mean_k: float
    eval_mae: float
    eval_eps: float


@dataclass(frozen=True)
class RunSummary:
    seed: int
    final_mae: float
    final_eps: float
    overcentralized_frac: float = None


@dataclass(frozen=True, eq=False)
class RunReport:
    config: dict
    seed: int
    records: tuple
    summary: RunSummary
    weights: LossWeights
    format_version: int = FORMAT_VERSION
    code_version: str = __version__
    params: object = None


@dataclass(frozen=True)
class SummaryRow:
    """Mean and spread of final metrics over seeds for one table row."""
    key: str
    mae_mean: float
    mae_std: float
    eps_mean: float
    eps_std: float
    overcentralized_mean: float = None


@dataclass(frozen=True, eq=False)
class SummaryTable:
    key_column: str
    rows: tuple
    reports: dict = field(default_factory=dict)
    trajectory: tuple = ()


@dataclass(frozen=True)
class GradcheckRow:
    loss: str
    cases: int
    max_rel_error: float


class _EpochStats:
    """Accumulates one epoch over every batch and fold."""

    def __init__(self):
        self.n = 0
        self.sums = np.zeros(4)
        self.ks = []
        self.ranks = []
        self.logits = []
        self.labels = []
        self.sigmas = []

    def add_train(self, results):
        for size, breakdown in results:
            self.n += size
            self.sums += size * np.array([
                breakdown.total,
                breakdown.softmax_term,
                breakdown.mean_term,
                breakdown.tail_term,
            ])
            if breakdown.per_sample_k.size:
                self.ks.append(breakdown.per_sample_k)
                self.ranks.append(breakdown.per_sample_rank)

    def add_eval(self, logits, test):
        self.logits.append(logits)
        self.labels.append(test.labels)
        self.sigmas.append(test.sigmas)

    def overcentralized(self):
        """Share of samples whose K left the label outside the top-K."""
        if not self.ks:
            return None
        ks, ranks = np.concatenate(self.ks), np.concatenate(self.ranks)
        return float(np.mean(ranks > ks))

    def to_record(self, epoch, lr, cfg):
        total, softmax_term, mean_term, tail_term = self.sums / self.n
        ks = np.concatenate(self.ks) if self.ks else np.zeros(0)
        result = evaluate(
            np.vstack(self.logits),
            np.concatenate(self.labels),
            np.concatenate(self.sigmas),
            round_predictions=cfg.round_predictions,
            clamp=cfg.clamp,
        )
        return EpochRecord(
            epoch=epoch,
            lr=lr,
            total=float(total),
            softmax_term=float(softmax_term),
            mean_term=float(mean_term),
            tail_term=float(tail_term),
            median_k=float(np.median(ks)) if ks.size else float('nan'),
            mean_k=float(np.mean(ks)) if ks.size else float('nan'),
            eval_mae=result.mae,
            eval_eps=result.eps_error,
        )


def load_dataset(cfg):
    """The dataset a configuration points at: a CSV file or synthetic data."""
    if cfg.dataset_path:
        return load_csv(cfg.dataset_path)
    return generate_dataset(cfg.synthetic)


def _effective_weights(cfg):
    kind = LossKind(cfg.loss)
    lambda1, lambda2 = cfg.weights.lambda1, cfg.weights.lambda2
    return LossWeights(
        lambda1 if kind in (LossKind.MEAN_SOFTMAX, LossKind.MEAN_VARIANCE, LossKind.AMR) else 0.0,
        lambda2 if kind not in (LossKind.SOFTMAX, LossKind.MEAN_SOFTMAX) else 0.0,
    )


def _folds(cfg, dataset, rng):
    if cfg.protocol == LOPO:
        subjects = dataset.subject_ids[:cfg.lopo_max_subjects]
        return lopo_splits(dataset.select_subjects(subjects))
    if cfg.protocol == HOLDOUT:
        return [holdout_split(dataset, cfg.holdout_fraction, rng.derive(2))]
    raise ConfigError(f'unknown protocol {cfg.protocol!r}')


def run_training(cfg, seed, dataset=None):
    """
    Train and evaluate once per epoch under the configured protocol.

    With leave-one-person-out every fold trains its own network; an epoch
    record pools the training batches and held-out predictions of all folds.
    """
    cfg.validate()
    if dataset is None:
        dataset = load_dataset(cfg)
    if dataset.n_features != cfg.synthetic.d_in:
        raise ConfigError(
            f'dataset has {dataset.n_features} features, network expects '
            f'{cfg.synthetic.d_in}'
        )
    rng = RngStream(seed)
    folds = _folds(cfg, dataset, rng)
    loss_fn = partial(compute_loss, cfg.loss, weights=cfg.weights, kmode=cfg.kmode)
    logger.info(
        'Training loss=%s k=%s seed=%d on %d fold(s)',
        LossKind(cfg.loss).value, cfg.kmode, seed, len(folds),
    )

    epochs = [_EpochStats() for _ in range(cfg.sgd.epochs)]
    params = None
    for index, (train, test) in enumerate(folds):
        params = init_params(cfg.layer_sizes, rng.derive(3 + 2 * index))
        batch_rng = rng.derive(4 + 2 * index)
        for epoch, stats in enumerate(epochs):
            lr = lr_at(epoch, cfg.sgd)
            params, results = train_epoch(
                params, batches(train, cfg.sgd.batch_size, batch_rng), lr, loss_fn
            )
            stats.add_train(results)
            logits, _ = forward(params, test.features)
            stats.add_eval(logits, test)

    records = []
    for epoch, stats in enumerate(epochs):
        record = stats.to_record(epoch + 1, lr_at(epoch, cfg.sgd), cfg)
        logger.debug('seed=%d %s', seed, record)
        records.append(record)

    final = records[-1]
    summary = RunSummary(
        seed=seed,
        final_mae=final.eval_mae,
        final_eps=final.eval_eps,
        overcentralized_frac=epochs[-1].overcentralized(),
    )
    logger.info(
        'Finished loss=%s seed=%d: MAE %.4f, eps %.4f',
        LossKind(cfg.loss).value, seed, summary.final_mae, summary.final_eps,
    )
    return RunReport(
        config=cfg.echo(),
        seed=seed,
        records=tuple(records),
        summary=summary,
        weights=_effective_weights(cfg),
        params=params if len(folds) == 1 else None,
    )


def _run_job(job):
    cfg, seed, dataset = job
    return run_training(cfg, seed, dataset)


def run_many(jobs, workers=1):
    """Run ``(cfg, seed, dataset)`` jobs, returning reports in job order."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def _std(values):
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def summarize(key, reports):
    """Aggregate the final metrics of ``reports`` into one table row."""
    maes = [report.summary.final_mae for report in reports]
    epss = [report.summary.final_eps for report in reports]
    fracs = [report.summary.overcentralized_frac for report in reports]
    return SummaryRow(
        key=str(key),
        mae_mean=float(np.mean(maes)),
        mae_std=_std(maes),
        eps_mean=float(np.mean(epss)),
        eps_std=_std(epss),
        overcentralized_mean=(
            float(np.mean(fracs)) if all(f is not None for f in fracs) else None
        ),
    )


def _sweep(cfg, settings, seeds, key_column, workers):
    """Run every ``(key, config)`` setting for every seed on one dataset."""
    if not seeds:
        raise ConfigError('at least one seed is required')
    for _, point in settings:
        point.validate()
    dataset = load_dataset(cfg)
    jobs = [(point, seed, dataset) for _, point in settings for seed in seeds]
    reports = iter(run_many(jobs, workers))
    grouped = {key: [next(reports) for _ in seeds] for key, _ in settings}
    rows = tuple(summarize(key, group) for key, group in grouped.items())
    return SummaryTable(key_column=key_column, rows=rows, reports=grouped)


def compare_losses(cfg, seeds, workers=1):
    """One row per loss combination, every row on the same data and seeds."""
    settings = [(kind.value, cfg.replace(loss=kind)) for kind in LossKind]
    return _sweep(cfg, settings, tuple(seeds), 'loss', workers)


def sweep_lambda2(cfg, grid, seeds, workers=1):
    """Adaptive mean-residue runs at fixed lambda1 over a lambda2 grid."""
    grid = tuple(float(point) for point in grid)
    if not grid:
        raise ConfigError('the lambda2 grid is empty')
    if any(point < 0 or not np.isfinite(point) for point in grid):
        raise ConfigError(f'lambda2 values must be finite and >= 0, got {grid}')
    settings = [
        (
            repr(point),
            cfg.replace(
                loss=LossKind.AMR,
                weights=LossWeights(cfg.weights.lambda1, point),
            ),
        )
        for point in grid
    ]
    return _sweep(cfg, settings, tuple(seeds), 'lambda2', workers)


def sweep_k(cfg, k_values, seeds, workers=1):
    """
    Fixed-K runs for each value plus exactly one adaptive run.

    The table's trajectory holds the adaptive run's median K per epoch,
    averaged over seeds.
    """
    kmodes = []
    for value in k_values:
        kmode = value if isinstance(value, KMode) else KMode.parse(value)
        if not kmode.is_adaptive and not 1 <= kmode.k <= cfg.n_classes:
            raise ConfigError(f'fixed k={kmode.k} outside 1..{cfg.n_classes}')
        if not kmode.is_adaptive and kmode not in kmodes:
            kmodes.append(kmode)
    kmodes.append(KMode.adaptive())
    settings = [
        (str(kmode), cfg.replace(loss=LossKind.AMR, kmode=kmode)) for kmode in kmodes
    ]
    table = _sweep(cfg, settings, tuple(seeds), 'k', workers)
    adaptive_reports = table.reports[str(KMode.adaptive())]
    trajectory = tuple(
        (epoch_records[0].epoch, float(np.mean([r.median_k for r in epoch_records])))
        for epoch_records in zip(*(report.records for report in adaptive_reports))
    )
    return SummaryTable(
        key_column='k', rows=table.rows, reports=table.reports, trajectory=trajectory
    )


def _frozen(op, logits, labels, kmode, **kwargs):
    """Evaluate ``op`` with the top-K membership of ``logits`` held fixed."""
    current = residue_loss(logits, labels, kmode)
    mask = outside_mask(softmax_rows(logits), current.per_sample_k)
    return lambda z: op(z, labels, kmode=kmode, outside=mask, **kwargs)


def _check_cross_entropy(logits, labels):
    return (
        cross_entropy_loss(logits, labels).grad,
        lambda z: cross_entropy_loss(z, labels).value,
    )


def _check_mean(logits, labels):
    return mean_loss(logits, labels).grad, lambda z: mean_loss(z, labels).value


def _check_residue(kmode):
    def check(logits, labels):
        frozen = _frozen(residue_loss, logits, labels, kmode)
        return residue_loss(logits, labels, kmode).grad, lambda z: frozen(z).value
    return check


def _check_variance(logits, labels):
    return variance_loss(logits).grad, lambda z: variance_loss(z).value


def _check_amr(weights, kmode):
    def check(logits, labels):
        frozen = _frozen(amr_loss, logits, labels, kmode, weights=weights)
        return (
            amr_loss(logits, labels, weights, kmode).grad_logits,
            lambda z: frozen(z).total,
        )
    return check


def _check_mv(weights):
    def check(logits, labels):
        return (
            mv_loss(logits, labels, weights).grad_logits,
            lambda z: mv_loss(z, labels, weights).total,
        )
    return check


GRADIENT_CASES = {
    'cross_entropy': _check_cross_entropy,
    'mean': _check_mean,
    'residue_fixed5': _check_residue(KMode.fixed(5)),
    'residue_adaptive': _check_residue(KMode.adaptive()),
    'variance': _check_variance,
    'amr': _check_amr(LossWeights(0.2, 0.05), KMode.adaptive()),
    'mv': _check_mv(LossWeights(0.2, 0.05)),
}


def run_gradient_suite(cases=100, n=4, n_classes=70, seed=0, step=1e-5):
    """
    Compare analytic logit gradients with central differences on random
    batches (logits uniform in [-3, 3]) for every loss.
    """
    rows = []
    for index, (name, case) in enumerate(GRADIENT_CASES.items()):
        rng = RngStream(seed, index)
        worst = 0.0
        for _ in range(cases):
            logits = rng.uniform(-3.0, 3.0, size=(n, n_classes))
            labels = rng.integers(1, n_classes, size=n)
            analytic, value_fn = case(logits, labels)
            numeric = finite_diff_grad(value_fn, logits, step)
            worst = max(worst, max_relative_error(analytic, numeric))
        logger.info('gradcheck %s: max relative error %.3e', name, worst)
        rows.append(GradcheckRow(loss=name, cases=cases, max_rel_error=worst))
    return rows
