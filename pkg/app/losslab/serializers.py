"""
Serializers for experiment configuration and recorded runs.
"""
from django.conf import settings
from rest_framework import serializers

from core.models import EpochRecord, ExperimentRun
from losslab.config import (
    DEFAULT_HIDDEN,
    DEFAULT_SEEDS,
    HOLDOUT,
    PROTOCOLS,
    ExperimentConfig,
)
from losslab.data import N_CLASSES, SyntheticConfig
from losslab.exceptions import InputError
from losslab.losses import KMode, LossKind, LossWeights
from losslab.network import SgdConfig

# Largest seed a BigIntegerField column can hold.
MAX_SEED = 2 ** 63 - 1


def _int_list(value, name):
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = [item for item in str(value).split(',') if item.strip()]
    try:
        return tuple(int(str(item).strip()) for item in items)
    except ValueError:
        raise serializers.ValidationError(f'{name} must be comma separated integers.')


def _float_list(value, name):
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = [item for item in str(value).split(',') if item.strip()]
    try:
        return tuple(float(str(item).strip()) for item in items)
    except ValueError:
        raise serializers.ValidationError(f'{name} must be comma separated numbers.')


def _default_output_dir():
    return str(settings.LOSSLAB_OUTPUT_DIR)


class SyntheticConfigSerializer(serializers.Serializer):
    """Validate synthetic dataset settings."""
    n_subjects = serializers.IntegerField(min_value=1, default=2000)
    images_per_subject = serializers.IntegerField(min_value=1, default=1)
    d_in = serializers.IntegerField(min_value=1, default=64)
    feature_noise = serializers.FloatField(min_value=0, default=0.1)
    sigma_low = serializers.FloatField(default=2.0)
    sigma_high = serializers.FloatField(default=6.0)
    data_seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED, default=0)

    def validate(self, attrs):
        if not 0 < attrs['sigma_low'] <= attrs['sigma_high']:
            raise serializers.ValidationError(
                {'sigma_low': 'Need 0 < sigma_low <= sigma_high.'}
            )
        return attrs

    def to_synthetic(self):
        data = self.validated_data
        return SyntheticConfig(
            n_subjects=data['n_subjects'],
            images_per_subject=data['images_per_subject'],
            d_in=data['d_in'],
            feature_noise=data['feature_noise'],
            sigma_range=(data['sigma_low'], data['sigma_high']),
            seed=data['data_seed'],
        )


class ExperimentConfigSerializer(SyntheticConfigSerializer):
    """Validate a training experiment; flags and config-file keys share names."""
    dataset = serializers.CharField(required=False, allow_null=True, default=None)
    loss = serializers.ChoiceField(
        choices=[kind.value for kind in LossKind], default=LossKind.AMR.value
    )
    lambda1 = serializers.FloatField(min_value=0, default=0.2)
    lambda2 = serializers.FloatField(min_value=0, default=0.05)
    k = serializers.CharField(default='adaptive')
    lr = serializers.FloatField(default=0.01)
    batch_size = serializers.IntegerField(min_value=1, default=64)
    epochs = serializers.IntegerField(min_value=1, default=60)
    decay_every = serializers.IntegerField(min_value=1, default=10)
    decay_factor = serializers.FloatField(default=0.1)
    hidden = serializers.CharField(
        default=','.join(str(width) for width in DEFAULT_HIDDEN)
    )
    protocol = serializers.ChoiceField(choices=PROTOCOLS, default=HOLDOUT)
    holdout = serializers.FloatField(default=0.2)
    lopo_max_subjects = serializers.IntegerField(min_value=2, default=200)
    seeds = serializers.CharField(
        default=','.join(str(seed) for seed in DEFAULT_SEEDS)
    )
    output_dir = serializers.CharField(default=_default_output_dir)
    round_predictions = serializers.BooleanField(default=False)
    clamp = serializers.BooleanField(default=False)

    def validate_k(self, value):
        try:
            kmode = KMode.parse(value)
            kmode.check(N_CLASSES)
        except InputError as exc:
            raise serializers.ValidationError(str(exc))
        return kmode

    def validate_hidden(self, value):
        widths = _int_list(value, 'hidden')
        if any(width < 1 for width in widths):
            raise serializers.ValidationError('Hidden widths must be positive.')
        return widths

    def validate_seeds(self, value):
        seeds = _int_list(value, 'seeds')
        if not seeds:
            raise serializers.ValidationError('At least one seed is required.')
        if any(not 0 <= seed <= MAX_SEED for seed in seeds):
            raise serializers.ValidationError('Seeds must lie in 0..2**63-1.')
        return seeds

    def validate(self, attrs):
        attrs = super().validate(attrs)
        if not attrs['lr'] > 0:
            raise serializers.ValidationError({'lr': 'Must be positive.'})
        if not 0 < attrs['decay_factor'] <= 1:
            raise serializers.ValidationError({'decay_factor': 'Must lie in (0, 1].'})
        if attrs['protocol'] == HOLDOUT and not 0 < attrs['holdout'] < 1:
            raise serializers.ValidationError({'holdout': 'Must lie in (0, 1).'})
        return attrs

    def to_config(self):
        data = self.validated_data
        config = ExperimentConfig(
            synthetic=self.to_synthetic(),
            dataset_path=data['dataset'],
            loss=LossKind(data['loss']),
            weights=LossWeights(data['lambda1'], data['lambda2']),
            kmode=data['k'],
            sgd=SgdConfig(
                base_lr=data['lr'],
                batch_size=data['batch_size'],
                epochs=data['epochs'],
                decay_every=data['decay_every'],
                decay_factor=data['decay_factor'],
            ),
            hidden=data['hidden'],
            protocol=data['protocol'],
            holdout_fraction=data['holdout'],
            lopo_max_subjects=data['lopo_max_subjects'],
            seeds=data['seeds'],
            output_dir=data['output_dir'],
            round_predictions=data['round_predictions'],
            clamp=data['clamp'],
        )
        return config.validate()


def parse_lambda_grid(value):
    grid = _float_list(value, 'grid')
    if not grid:
        raise serializers.ValidationError('The lambda2 grid is empty.')
    if any(point < 0 for point in grid):
        raise serializers.ValidationError('lambda2 values must be >= 0.')
    return grid


def parse_k_values(value):
    values = []
    for item in str(value).split(','):
        item = item.strip()
        if not item:
            continue
        try:
            kmode = KMode.parse(item)
            kmode.check(N_CLASSES)
        except InputError as exc:
            raise serializers.ValidationError(str(exc))
        values.append(kmode)
    return tuple(values)


class EpochRecordSerializer(serializers.ModelSerializer):
    """Serializer for per-epoch records."""

    class Meta:
        model = EpochRecord
        fields = [
            'epoch', 'lr', 'total', 'softmax_term', 'mean_term', 'tail_term',
            'median_k', 'mean_k', 'eval_mae', 'eval_eps',
        ]
        read_only_fields = fields


class ExperimentRunSerializer(serializers.ModelSerializer):
    """Serializer for recorded runs."""

    class Meta:
        model = ExperimentRun
        fields = [
            'id', 'command', 'loss', 'k_mode', 'lambda1', 'lambda2', 'seed',
            'protocol', 'final_mae', 'final_eps', 'created_at',
        ]
        read_only_fields = fields


class ExperimentRunDetailSerializer(ExperimentRunSerializer):
    """Serializer for run detail view."""
    epochs = EpochRecordSerializer(many=True, read_only=True)

    class Meta(ExperimentRunSerializer.Meta):
        fields = ExperimentRunSerializer.Meta.fields + [
            'format_version', 'config', 'overcentralized_frac', 'epochs',
        ]
        read_only_fields = fields
