from django.core.exceptions import ValidationError
from django.db import models
from django.db.models import Count, Q

from tamp.constants import PLANNING_MODES

from .base import RecordedMixin, SeededMixin


class ExperimentRun(SeededMixin, RecordedMixin):
    """One invocation of the experiment harness."""

    name = models.CharField(max_length=200)
    modes = models.JSONField(default=list, help_text="Planning modes compared in this run")
    scene_count = models.IntegerField(default=0)
    augment_count = models.IntegerField(default=0, help_text="Executions added to the model before the second round")
    config = models.JSONField(blank=True, default=dict, help_text="Resolved run configuration")

    class Meta:
        ordering = ["-recorded_at", "-id"]

    def __str__(self) -> str:
        return self.name

    def failure_counts(self) -> dict:
        """{(mode, augmented): (trials, failures)}"""
        rows = (
            self.trials.values("mode", "augmented")
            .annotate(total=Count("id"), failures=Count("id", filter=Q(failed=True)))
            .order_by("mode", "augmented")
        )
        return {(r["mode"], r["augmented"]): (r["total"], r["failures"]) for r in rows}


class TrialRecord(SeededMixin, RecordedMixin):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name="trials")
    scene = models.CharField(max_length=200)
    mode = models.CharField(max_length=20, choices=PLANNING_MODES)
    augmented = models.BooleanField(default=False)
    failed = models.BooleanField(default=False)
    reason = models.TextField(blank=True)
    error = models.FloatField(null=True, blank=True, help_text="Distance from the mate pose in meters")
    error_x = models.FloatField(null=True, blank=True)
    error_y = models.FloatField(null=True, blank=True)
    actions = models.TextField(blank=True)
    value_history = models.JSONField(default=list, blank=True)
    wall_time = models.FloatField(default=0.0, help_text="Seconds")

    class Meta:
        ordering = ["run", "augmented", "scene", "mode"]

    def __str__(self) -> str:
        return f"{self.scene}/{self.mode}: {'failed' if self.failed else f'{self.error:.4f} m'}"

    def clean(self):
        errors = (self.error, self.error_x, self.error_y)
        if self.failed and any(e is not None for e in errors):
            raise ValidationError("A failed trial cannot have a placement error")
        if not self.failed and any(e is None for e in errors):
            raise ValidationError("A successful trial needs a placement error")

    def save(self, *args, **kwargs):
        self.clean()
        super().save(*args, **kwargs)

    @classmethod
    def from_outcome(cls, run: ExperimentRun, outcome) -> "TrialRecord":
        row = outcome.to_row()
        return cls.objects.create(
            run=run,
            scene=row["scene"],
            mode=row["mode"],
            seed=row["seed"],
            augmented=bool(row["augmented"]),
            failed=bool(row["failed"]),
            reason=row["reason"],
            error=row["error"],
            error_x=row["error_x"],
            error_y=row["error_y"],
            actions=row["actions"],
            value_history=[float(v) for v in outcome.value_history],
            wall_time=row["wall_time"],
        )

    def to_row(self) -> dict:
        return {
            "scene": self.scene,
            "mode": self.mode,
            "augmented": int(self.augmented),
            "seed": self.seed,
            "failed": int(self.failed),
            "reason": self.reason,
            "error": self.error,
            "error_x": self.error_x,
            "error_y": self.error_y,
            "actions": self.actions,
            "final_log_value": self.value_history[-1] if self.value_history else None,
            "wall_time": self.wall_time,
        }
