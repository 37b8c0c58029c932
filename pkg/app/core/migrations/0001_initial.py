# Generated by Django 4.0.10 on 2026-10-17 09:12

from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(max_length=64)),
                ('loss', models.CharField(max_length=32)),
                ('k_mode', models.CharField(max_length=16)),
                ('lambda1', models.FloatField()),
                ('lambda2', models.FloatField()),
                ('seed', models.PositiveBigIntegerField()),
                ('protocol', models.CharField(max_length=16)),
                ('final_mae', models.FloatField()),
                ('final_eps', models.FloatField()),
                ('overcentralized_frac', models.FloatField(blank=True, null=True)),
                ('format_version', models.PositiveIntegerField()),
                ('config', models.JSONField(default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['id'],
            },
        ),
        migrations.CreateModel(
            name='EpochRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('epoch', models.PositiveIntegerField()),
                ('lr', models.FloatField()),
                ('total', models.FloatField()),
                ('softmax_term', models.FloatField()),
                ('mean_term', models.FloatField()),
                ('tail_term', models.FloatField()),
                ('median_k', models.FloatField(blank=True, null=True)),
                ('mean_k', models.FloatField(blank=True, null=True)),
                ('eval_mae', models.FloatField()),
                ('eval_eps', models.FloatField()),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='epochs', to='core.experimentrun')),
            ],
            options={
                'ordering': ['run', 'epoch'],
            },
        ),
        migrations.AddConstraint(
            model_name='epochrecord',
            constraint=models.UniqueConstraint(fields=('run', 'epoch'), name='unique_epoch_per_run'),
        ),
    ]
