"""
Django-Q task wrapper for experiment trials.

Each trial ships as a JSON-safe job: the expert model, the scene, the resolved
run configuration and the PDDL file paths. Workers rebuild everything from it
and send back the outcome payload, so results do not depend on which worker
ran them.
"""

import logging
import uuid
from functools import lru_cache
from typing import List, Sequence

from django.conf import settings
from tqdm import tqdm

from tamp.services.experiment import RunConfig, Task, TrialOutcome, load_task, run_trial
from tamp.services.expert import ExpertModel
from tamp.services.scene_io import scene_from_dict, scene_to_dict
from tamp.services.simulator import Scene

logger = logging.getLogger(__name__)


@lru_cache(maxsize=8)
def _task(domain_path: str, problem_path: str) -> Task:
    return load_task(domain_path, problem_path)


def trial_job(model: ExpertModel, cfg: RunConfig, scene: Scene, mode: str, seed: int, augmented: bool) -> dict:
    return {
        "model": model.to_dict(),
        "config": cfg.to_dict(),
        "scene": scene_to_dict(scene),
        "mode": mode,
        "seed": seed,
        "augmented": augmented,
    }


def _run(job: dict) -> TrialOutcome:
    cfg = RunConfig(job["config"])
    scene = scene_from_dict(job["scene"])
    task = _task(str(cfg.path("domain")), str(cfg.path("problem")))
    model = ExpertModel.from_dict(job["model"])
    return run_trial(model, task, scene, job["mode"], cfg, job["seed"], job["augmented"])


def run_trial_task(job: dict) -> dict:
    """Django-Q task: run one trial and return its outcome payload."""
    label = f"{job['scene'].get('name', 'scene')}/{job['mode']}"
    logger.info(f"Starting trial {label}")
    try:
        return _run(job).to_payload()
    except Exception as e:
        logger.error(f"Trial {label} crashed: {e}", exc_info=True)
        raise


def dispatch_trials(
    jobs: Sequence[dict], task: Task, workers: int = 0, progress: bool = False
) -> List[TrialOutcome]:
    """
    Run jobs inline (workers == 0) or through the Django-Q cluster, returning
    outcomes in job order either way.
    """
    if workers <= 0:
        return [_run(job) for job in tqdm(jobs, desc="trials", unit="trial", disable=not progress)]

    from django_q.tasks import async_task, result_group

    group = f"trials-{uuid.uuid4().hex[:12]}"
    for index, job in enumerate(jobs):
        async_task("tamp.tasks.trials.run_trial_task", job, group=group, task_name=f"{group}-{index:04d}")
    logger.info(f"Queued {len(jobs)} trials as group {group}")
    wait_ms = settings.Q_CLUSTER["timeout"] * 1000 * max(1, len(jobs))
    results = result_group(group, failures=True, wait=wait_ms, count=len(jobs)) or []
    if len(results) != len(jobs):
        logger.warning(f"Group {group}: {len(results)} of {len(jobs)} trials returned")

    # Results arrive in completion order
    by_key = {(p["scene"], p["mode"], int(p["augmented"])): p for p in results if isinstance(p, dict)}
    outcomes = []
    for job in jobs:
        scene = scene_from_dict(job["scene"])
        payload = by_key.get((scene.name, job["mode"], int(job["augmented"])))
        if payload is None:
            payload = {
                "scene": scene.name,
                "mode": job["mode"],
                "seed": job["seed"],
                "augmented": int(job["augmented"]),
                "failed": 1,
                "reason": "worker returned no result",
            }
        outcomes.append(TrialOutcome.from_payload(payload, scene, task.graph))
    return outcomes
