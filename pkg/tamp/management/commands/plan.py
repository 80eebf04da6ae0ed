"""
Management command to plan and execute the task in one scene.

Usage:
    python manage.py plan --config data/run_config.json --seed 7
    python manage.py plan --config data/run_config.json --scene my_scene.json --mode no-lookahead

Writes into --out: plan.json, iterations.csv, trajectories/*.csv, plan.svg,
values.svg and, when the goal is reached, executions/<id>.json (the executed
plan as a demonstration for `augment`).

Exit codes: 0 success, 1 planning failure, 2 bad input.
"""

import logging

import numpy as np
from django.core.management.base import BaseCommand, CommandError

from tamp.constants import PLANNING_MODES
from tamp.services.demonstrations import demonstration_from_execution, save_demonstration
from tamp.services.experiment import (
    check_plan,
    load_task,
    placement_error,
    plan_document,
    write_json,
)
from tamp.services.expert import BoundModel, load_model
from tamp.services.rendering import render_plan, render_values, write_csv, write_svg, write_trajectory_csvs
from tamp.services.scene_io import load_scene
from tamp.utils.cem import PlanningError
from tamp.utils.treeplan import execute

from ._common import INPUT_ERROR, PLANNING_FAILURE, add_run_arguments, configure_logging, input_errors, run_config

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Plan the task in a scene with the learned expert model"

    def add_arguments(self, parser):
        add_run_arguments(parser)
        parser.add_argument("--scene", type=str, help="Scene file")
        parser.add_argument("--model", type=str, help="Expert model file")
        parser.add_argument("--mode", type=str, choices=[m for m, _ in PLANNING_MODES], help="Planning mode")
        parser.add_argument("--samples", type=int, help="Trajectories per iteration (M)")
        parser.add_argument("--horizon", type=int, help="Lookahead depth (H)")

    def handle(self, *args, **options):
        configure_logging(options)
        cfg = run_config(
            options,
            paths={"scene": options["scene"], "model": options["model"]},
            planner={"samples": options["samples"], "horizon": options["horizon"]},
            required=("domain", "problem", "scene", "model"),
            mode=options["mode"],
        )
        with input_errors("Invalid planning input"):
            task = load_task(cfg.path("domain"), cfg.path("problem"))
            scene = load_scene(cfg.path("scene"))
            model = load_model(cfg.path("model"))
            missing = model.covers({e.skill for e in task.graph.edges})
            if missing:
                raise CommandError(f"Model has no data for skill(s): {', '.join(missing)}", returncode=INPUT_ERROR)
            library = BoundModel(model, task.domain, scene, cfg.skill_settings())
            tree_cfg = cfg.tree_config()

        out = cfg.out_dir()
        self.stdout.write(f"\nPlanning in scene {scene.name} (mode {cfg.mode}, seed {cfg.seed})")
        try:
            result = execute(
                task.graph, scene, library, tree_cfg, scene.start_state(), np.random.default_rng(cfg.seed), cfg.mode
            )
        except PlanningError as e:
            logger.error(f"Planning failed: {e}", exc_info=True)
            write_json({"failed": True, "reason": str(e), "seed": cfg.seed}, out / "plan.json")
            raise CommandError(f"Planning failed: {e}", returncode=PLANNING_FAILURE) from e

        if not result.failed and result.goal_reached:
            invalid = check_plan(scene, result)
            if invalid is not None:
                result.failed, result.reason = True, f"invalid trajectory in plan ({invalid})"

        write_json(plan_document(result, scene, cfg.seed), out / "plan.json")
        write_csv([s.to_row() for s in result.stats], out / "iterations.csv")
        write_svg(render_values(result.value_history), out / "values.svg")
        if result.trajectories:
            write_trajectory_csvs(result.labels, result.trajectories, out / "trajectories")
            write_svg(render_plan(scene, result.labels, result.trajectories), out / "plan.svg")

        if result.failed or not result.goal_reached:
            raise CommandError(
                f"Planning failed: {result.reason or 'goal not reached'}", returncode=PLANNING_FAILURE
            )

        execution = demonstration_from_execution(
            f"exec-{scene.name}-{cfg.seed}",
            scene,
            task.domain,
            task.graph,
            result.actions,
            result.trajectories,
            frame_types=cfg.data["features"]["frame_types"],
            holding_predicate=cfg.data["features"]["holding_predicate"],
        )
        save_demonstration(execution, out / "executions")

        for label in result.labels:
            self.stdout.write(f"  {label}")
        error = placement_error(scene, result.actions, result.trajectories)
        if error is not None:
            self.stdout.write(f"Placement error {error.distance * 100:.2f} cm (x {error.x:+.4f}, y {error.y:+.4f})")
        self.stdout.write(self.style.SUCCESS(f"Plan with {len(result.actions)} actions written to {out}"))
