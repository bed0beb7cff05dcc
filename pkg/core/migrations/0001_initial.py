from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('algo', models.CharField(db_index=True, max_length=32)),
                ('seed', models.IntegerField(default=0)),
                ('config_hash', models.CharField(db_index=True, max_length=64)),
                ('output_path', models.CharField(max_length=512)),
                ('session_count', models.PositiveIntegerField(default=0)),
                ('update_count', models.PositiveIntegerField(default=0)),
                ('median_improvement', models.FloatField(default=0.0)),
                ('p95_improvement', models.FloatField(default=0.0)),
                ('created_at', models.DateTimeField(auto_now_add=True, db_index=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['algo', 'created_at'], name='core_experi_algo_6b1f0e_idx')],
            },
        ),
    ]
