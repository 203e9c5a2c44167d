# Generated by Django 5.0 on 2026-10-17 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SynthesisRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('config_hash', models.CharField(db_index=True, max_length=64)),
                ('seed', models.IntegerField(default=0)),
                ('scene_name', models.CharField(blank=True, max_length=100, null=True)),
                ('output_dir', models.CharField(max_length=500)),
                ('manifest', models.JSONField(default=dict)),
                ('psnr', models.FloatField(blank=True, null=True)),
                ('ssim', models.FloatField(blank=True, null=True)),
                ('synthesis_ms', models.FloatField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'db_table': 'synthesis_run',
                'ordering': ['-created_at'],
            },
        ),
    ]
