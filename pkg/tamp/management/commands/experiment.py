"""
Management command to compare planning modes over a suite of scenes.

Usage:
    python manage.py experiment --config data/run_config.json --trials 10
    python manage.py experiment --config data/run_config.json --modes full baseline --augment 3
    python manage.py experiment --config data/run_config.json --trials 10 --reduced --workers 4
    python manage.py experiment --config data/run_config.json --trials 0 --obstacles

Every (scene, mode) pair is one trial with its own random stream. Failed
trials are recorded and the run continues. With --augment k the k most
precise successful full-mode executions are added to the model and every
trial is run again. Results go to the database (ExperimentRun/TrialRecord)
and to trials.csv and summary.csv in --out.
"""

import logging

from django.core.management.base import BaseCommand, CommandError

from tamp.constants import AUGMENT_EXECUTIONS, DEFAULT_TRIALS, PLANNING_MODES, REDUCED_SAMPLES
from tamp.models import ExperimentRun, TrialRecord
from tamp.services.experiment import (
    MODES,
    executions_as_demos,
    load_task,
    obstacle_suite,
    scene_suite,
    select_for_augmentation,
    summarize,
    trial_seed,
)
from tamp.services.expert import augment, load_model, save_model
from tamp.services.rendering import write_csv
from tamp.services.scene_io import load_scene, load_scenes
from tamp.tasks import dispatch_trials, trial_job

from ._common import INPUT_ERROR, add_run_arguments, configure_logging, input_errors, run_config

logger = logging.getLogger(__name__)

TRIAL_COLUMNS = [
    "scene",
    "mode",
    "augmented",
    "seed",
    "failed",
    "reason",
    "error",
    "error_x",
    "error_y",
    "actions",
    "final_log_value",
]
SUMMARY_COLUMNS = [
    "mode",
    "augmented",
    "trials",
    "failures",
    "median_error",
    "mean_error",
    "median_error_x",
    "median_error_y",
]


class Command(BaseCommand):
    help = "Run the planning-mode comparison over generated scenes"

    def add_arguments(self, parser):
        add_run_arguments(parser)
        parser.add_argument("--model", type=str, help="Expert model file")
        parser.add_argument("--trials", type=int, default=DEFAULT_TRIALS, help="Number of generated scenes")
        parser.add_argument("--scenes", nargs="*", default=[], help="Scene files or directories to use as well")
        parser.add_argument(
            "--modes",
            nargs="+",
            default=MODES,
            choices=[m for m, _ in PLANNING_MODES],
            help="Planning modes to compare",
        )
        parser.add_argument(
            "--augment",
            type=int,
            nargs="?",
            const=AUGMENT_EXECUTIONS,
            default=0,
            help=f"Refit with the k best full-mode executions and rerun (default k={AUGMENT_EXECUTIONS})",
        )
        parser.add_argument(
            "--obstacles",
            action="store_true",
            help="Add the configured scene with its preferred face blocked and with one node occupied",
        )
        parser.add_argument(
            "--reduced", action="store_true", help=f"Use M={REDUCED_SAMPLES} trajectories per iteration"
        )
        parser.add_argument("--workers", type=int, default=0, help="Run trials on the Django-Q cluster")
        parser.add_argument("--name", type=str, default="", help="Name for the experiment run")

    def handle(self, *args, **options):
        configure_logging(options)
        cfg = run_config(
            options,
            paths={"model": options["model"]},
            planner={"samples": REDUCED_SAMPLES if options["reduced"] else None},
            required=("domain", "problem", "model"),
        )
        modes = list(dict.fromkeys(options["modes"]))
        if options["trials"] < 0:
            raise CommandError("--trials cannot be negative", returncode=INPUT_ERROR)

        with input_errors("Invalid experiment input"):
            task = load_task(cfg.path("domain"), cfg.path("problem"))
            model = load_model(cfg.path("model"))
            scenes = scene_suite(options["trials"], cfg.seed)
            scenes.extend(load_scenes(options["scenes"]))
            if options["obstacles"]:
                if cfg.path("scene") is None:
                    raise ValueError("--obstacles needs a scene in the config")
                scenes.extend(obstacle_suite(load_scene(cfg.path("scene"))))

        run = ExperimentRun.objects.create(
            name=options["name"] or f"experiment-seed-{cfg.seed}",
            modes=modes,
            seed=cfg.seed,
            scene_count=len(scenes),
            augment_count=options["augment"],
            config=cfg.to_dict(),
        )
        self.stdout.write(f"\nExperiment {run.id}: {len(scenes)} scenes x {len(modes)} modes")

        outcomes = self._round(model, cfg, scenes, modes, task, options, round_index=0)
        if options["augment"] and scenes:
            chosen = select_for_augmentation(outcomes, options["augment"])
            if len(chosen) < options["augment"]:
                self.stdout.write(
                    self.style.WARNING(
                        f"Only {len(chosen)} successful full-mode trials available for augmentation"
                    )
                )
            if chosen:
                scene_by_name = {s.name: s for s in scenes}
                with input_errors("Augmentation failed"):
                    demos = executions_as_demos(chosen, scene_by_name, task, cfg)
                    model = augment(model, demos, [d.id for d in demos])
                save_model(model, cfg.out_dir() / "model_augmented.json")
                outcomes += self._round(model, cfg, scenes, modes, task, options, round_index=1)

        for outcome in outcomes:
            TrialRecord.from_outcome(run, outcome)

        out = cfg.out_dir()
        write_csv([t.to_row() for t in run.trials.all()], out / "trials.csv", TRIAL_COLUMNS)
        summary = summarize(outcomes, modes)
        write_csv(summary, out / "summary.csv", SUMMARY_COLUMNS)

        self.stdout.write(f"\n{'mode':<14}{'augmented':>10}{'trials':>8}{'failures':>10}{'median error':>14}")
        for row in summary:
            median = f"{row['median_error'] * 100:.2f} cm" if row["median_error"] is not None else "-"
            self.stdout.write(
                f"{row['mode']:<14}{row['augmented']:>10}{row['trials']:>8}{row['failures']:>10}{median:>14}"
            )
        self.stdout.write(self.style.SUCCESS(f"\nWrote {len(outcomes)} trial records to {out}"))

    def _round(self, model, cfg, scenes, modes, task, options, round_index: int):
        jobs = [
            trial_job(model, cfg, scene, mode, trial_seed(cfg.seed, i, mode, round_index), round_index > 0)
            for i, scene in enumerate(scenes)
            for mode in modes
        ]
        return dispatch_trials(jobs, task, options["workers"], progress=True)
