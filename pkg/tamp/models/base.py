from django.db import models


class RecordedMixin(models.Model):
    """Abstract mixin for results stamped once, when the harness writes them"""

    recorded_at = models.DateTimeField(auto_now_add=True, db_index=True)

    class Meta:
        abstract = True


class SeededMixin(models.Model):
    """Abstract mixin for records that are reproducible from one integer seed"""

    # signed 64-bit; trial seeds are 32-bit SeedSequence draws
    seed = models.BigIntegerField(default=0, help_text="Seed of the random stream")

    class Meta:
        abstract = True
