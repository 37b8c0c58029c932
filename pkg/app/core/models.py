"""
Database models.
"""
import math

from django.db import models, transaction


def _nullable(value):
    """NaN and None both map to NULL."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return value


class ExperimentRunManager(models.Manager):
    """Manager for recorded runs."""

    def create_from_report(self, report, command):
        """Create, save and return a run with one record per epoch."""
        if not report.records:
            raise ValueError('Report must hold at least one epoch')
        config = report.config
        with transaction.atomic(using=self._db):
            run = self.create(
                command=command,
                loss=config['loss'],
                k_mode=config['k'],
                lambda1=report.weights.lambda1,
                lambda2=report.weights.lambda2,
                seed=report.seed,
                protocol=config['protocol'],
                final_mae=report.summary.final_mae,
                final_eps=report.summary.final_eps,
                overcentralized_frac=_nullable(report.summary.overcentralized_frac),
                format_version=report.format_version,
                config=config,
            )
            EpochRecord.objects.bulk_create([
                EpochRecord(
                    run=run,
                    epoch=record.epoch,
                    lr=record.lr,
                    total=record.total,
                    softmax_term=record.softmax_term,
                    mean_term=record.mean_term,
                    tail_term=record.tail_term,
                    median_k=_nullable(record.median_k),
                    mean_k=_nullable(record.mean_k),
                    eval_mae=record.eval_mae,
                    eval_eps=record.eval_eps,
                )
                for record in report.records
            ])

        return run


class ExperimentRun(models.Model):
    """One training run of one loss and seed."""
    command = models.CharField(max_length=64)
    loss = models.CharField(max_length=32)
    k_mode = models.CharField(max_length=16)
    lambda1 = models.FloatField()
    lambda2 = models.FloatField()
    seed = models.PositiveBigIntegerField()
    protocol = models.CharField(max_length=16)
    final_mae = models.FloatField()
    final_eps = models.FloatField()
    overcentralized_frac = models.FloatField(null=True, blank=True)
    format_version = models.PositiveIntegerField()
    config = models.JSONField(default=dict)
    created_at = models.DateTimeField(auto_now_add=True)

    objects = ExperimentRunManager()

    class Meta:
        ordering = ['id']

    def __str__(self):
        return f'{self.command} {self.loss} k={self.k_mode} seed={self.seed}'


class EpochRecord(models.Model):
    """Training and evaluation summary of one epoch."""
    run = models.ForeignKey(
        ExperimentRun,
        on_delete=models.CASCADE,
        related_name='epochs',
    )
    epoch = models.PositiveIntegerField()
    lr = models.FloatField()
    total = models.FloatField()
    softmax_term = models.FloatField()
    mean_term = models.FloatField()
    tail_term = models.FloatField()
    median_k = models.FloatField(null=True, blank=True)
    mean_k = models.FloatField(null=True, blank=True)
    eval_mae = models.FloatField()
    eval_eps = models.FloatField()

    class Meta:
        ordering = ['run', 'epoch']
        constraints = [
            models.UniqueConstraint(
                fields=['run', 'epoch'], name='unique_epoch_per_run'
            ),
        ]

    def __str__(self):
        return f'{self.run_id}:{self.epoch}'
