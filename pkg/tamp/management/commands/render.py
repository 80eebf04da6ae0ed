"""
Management command to render scenes, plans and per-iteration sample fans as SVG.

Usage:
    python manage.py render --scene data/scenes/canonical.json
    python manage.py render --plan out/plan.json --svg out/plan.svg
    python manage.py render --fans out/fans.json
    python manage.py render --config data/run_config.json --fan-action "approach link1 front"

--fan-action optimizes one action from the scene's start state, writes the
sampled paths of every iteration to fans.json and renders them.
"""

import logging
from pathlib import Path

import json5
from django.core.management.base import BaseCommand, CommandError

from tamp.constants import FAN_PATHS
from tamp.services.experiment import (
    fans_document,
    iteration_fans,
    load_task,
    read_fans_document,
    read_plan_document,
    write_json,
)
from tamp.services.expert import load_model
from tamp.services.rendering import render_fans, render_plan, render_scene, write_svg
from tamp.services.scene_io import load_scene
from tamp.utils.cem import PlanningError

from ._common import (
    INPUT_ERROR,
    PLANNING_FAILURE,
    add_run_arguments,
    configure_logging,
    input_errors,
    require_file,
    run_config,
)

logger = logging.getLogger(__name__)


def _read_json(path: Path, what: str):
    try:
        return json5.loads(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise CommandError(f"{what.capitalize()} {path} is malformed: {e}", returncode=INPUT_ERROR) from e


class Command(BaseCommand):
    help = "Render a scene, a plan or sampling fans to SVG"

    def add_arguments(self, parser):
        add_run_arguments(parser)
        inputs = parser.add_mutually_exclusive_group()
        inputs.add_argument("--plan", type=str, help="Plan file written by `plan`")
        inputs.add_argument("--fans", type=str, help="Fan file written by --fan-action")
        inputs.add_argument("--fan-action", type=str, help="Action label to optimize and draw fans for")
        parser.add_argument("--scene", type=str, help="Scene file")
        parser.add_argument("--model", type=str, help="Expert model file (for --fan-action)")
        parser.add_argument("--paths", type=int, default=FAN_PATHS, help="Paths drawn per iteration")
        parser.add_argument("--svg", type=str, help="Output SVG file")
        parser.add_argument("--title", type=str, help="Figure title")

    def handle(self, *args, **options):
        configure_logging(options)
        cfg = run_config(options, paths={"scene": options["scene"], "model": options["model"]})
        out = cfg.out_dir()
        title = options["title"]

        with input_errors("Cannot render"):
            if options["plan"]:
                path = require_file(options["plan"], "plan file")
                scene, labels, trajectories = read_plan_document(_read_json(path, "plan file"))
                svg = render_plan(scene, labels, trajectories, title or scene.name)
                default_name = f"{path.stem}.svg"
            elif options["fans"]:
                path = require_file(options["fans"], "fan file")
                label, scene, fans = read_fans_document(_read_json(path, "fan file"))
                svg = render_fans(scene, fans, title or label)
                default_name = f"{path.stem}.svg"
            elif options["fan_action"]:
                for key in ("domain", "problem", "scene", "model"):
                    require_file(cfg.path(key), key)
                task = load_task(cfg.path("domain"), cfg.path("problem"))
                scene = load_scene(cfg.path("scene"))
                model = load_model(cfg.path("model"))
                label = options["fan_action"]
                try:
                    fans = iteration_fans(model, task, scene, label, cfg, options["paths"])
                except PlanningError as e:
                    raise CommandError(f"Planning failed: {e}", returncode=PLANNING_FAILURE) from e
                write_json(fans_document(label, fans, scene), out / "fans.json")
                svg = render_fans(scene, fans, title or label)
                default_name = "fans.svg"
            else:
                scene = load_scene(require_file(cfg.path("scene"), "scene file"))
                svg = render_scene(scene, title=title or scene.name)
                default_name = f"{scene.name}.svg"

        target = Path(options["svg"]) if options["svg"] else out / default_name
        write_svg(svg, target)
        self.stdout.write(self.style.SUCCESS(f"Wrote {target}"))
