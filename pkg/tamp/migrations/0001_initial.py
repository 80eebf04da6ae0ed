# Generated by Django 5.2.7 on 2026-10-19 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('seed', models.BigIntegerField(default=0, help_text='Seed of the random stream')),
                ('recorded_at', models.DateTimeField(auto_now_add=True, db_index=True)),
                ('name', models.CharField(max_length=200)),
                ('modes', models.JSONField(default=list, help_text='Planning modes compared in this run')),
                ('scene_count', models.IntegerField(default=0)),
                ('augment_count', models.IntegerField(default=0, help_text='Executions added to the model before the second round')),
                ('config', models.JSONField(blank=True, default=dict, help_text='Resolved run configuration')),
            ],
            options={
                'ordering': ['-recorded_at', '-id'],
            },
        ),
        migrations.CreateModel(
            name='TrialRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('seed', models.BigIntegerField(default=0, help_text='Seed of the random stream')),
                ('recorded_at', models.DateTimeField(auto_now_add=True, db_index=True)),
                ('scene', models.CharField(max_length=200)),
                ('mode', models.CharField(choices=[('full', 'Options / Lookahead'), ('no-lookahead', 'Options / No Lookahead'), ('no-options', 'No Options / Lookahead'), ('baseline', 'No Options / No Lookahead')], max_length=20)),
                ('augmented', models.BooleanField(default=False)),
                ('failed', models.BooleanField(default=False)),
                ('reason', models.TextField(blank=True)),
                ('error', models.FloatField(blank=True, help_text='Distance from the mate pose in meters', null=True)),
                ('error_x', models.FloatField(blank=True, null=True)),
                ('error_y', models.FloatField(blank=True, null=True)),
                ('actions', models.TextField(blank=True)),
                ('value_history', models.JSONField(blank=True, default=list)),
                ('wall_time', models.FloatField(default=0.0, help_text='Seconds')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='trials', to='tamp.experimentrun')),
            ],
            options={
                'ordering': ['run', 'augmented', 'scene', 'mode'],
            },
        ),
    ]
