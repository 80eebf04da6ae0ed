from .base import RecordedMixin, SeededMixin
from .experiment import ExperimentRun, TrialRecord

__all__ = [
    "RecordedMixin",
    "SeededMixin",
    "ExperimentRun",
    "TrialRecord",
]
