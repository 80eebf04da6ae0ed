from .trials import dispatch_trials, run_trial_task, trial_job

__all__ = [
    "dispatch_trials",
    "run_trial_task",
    "trial_job",
]
