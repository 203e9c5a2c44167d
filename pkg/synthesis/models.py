from django.db import models


class SynthesisRun(models.Model):
    """Model to store synthesis run manifests."""

    config_hash = models.CharField(max_length=64, db_index=True)
    seed = models.IntegerField(default=0)
    scene_name = models.CharField(max_length=100, null=True, blank=True)
    output_dir = models.CharField(max_length=500)
    manifest = models.JSONField(default=dict)
    psnr = models.FloatField(null=True, blank=True)
    ssim = models.FloatField(null=True, blank=True)
    synthesis_ms = models.FloatField(null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        db_table = 'synthesis_run'
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.config_hash[:12]} - {self.scene_name or 'captures'}"

    @property
    def synthesis_ms_display(self):
        """Return human-readable synthesis time."""
        if self.synthesis_ms is None:
            return "-"
        if self.synthesis_ms < 1000:
            return f"{self.synthesis_ms:.1f} ms"
        return f"{self.synthesis_ms / 1000:.2f} s"
