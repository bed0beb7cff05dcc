from django.db import models


class ExperimentRun(models.Model):
    """
    One completed harness run.

    The results, decision, event and update files live on disk under
    ``output_path``; the row keeps what is needed to find and compare runs.
    """
    algo = models.CharField(max_length=32, db_index=True)
    seed = models.IntegerField(default=0)
    config_hash = models.CharField(max_length=64, db_index=True)
    output_path = models.CharField(max_length=512)
    session_count = models.PositiveIntegerField(default=0)
    update_count = models.PositiveIntegerField(default=0)
    median_improvement = models.FloatField(default=0.0)
    p95_improvement = models.FloatField(default=0.0)
    created_at = models.DateTimeField(auto_now_add=True, db_index=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['algo', 'created_at'], name='core_experi_algo_6b1f0e_idx'),
        ]

    def __str__(self):
        return f"{self.algo} seed={self.seed} ({self.median_improvement:.1%} median)"
