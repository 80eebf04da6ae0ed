"""
Management command to write the scripted demonstration set.

Usage:
    python manage.py create_demos --config data/run_config.json --scenes 4
    python manage.py create_demos --config data/run_config.json --noise 0.01 --demos out/demos --clear

Every scene (the configured one plus --scenes generated ones) gets one
demonstration per (grasp face, target node) pair.
"""

import logging

from django.core.management.base import BaseCommand

from tamp.services.demonstrations import DEFAULT_FACES, DEFAULT_NODES, demonstration_set, save_demonstration
from tamp.services.experiment import load_task, scene_suite
from tamp.services.scene_io import load_scene, save_scene

from ._common import add_run_arguments, configure_logging, input_errors, run_config

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Write scripted demonstrations of the assembly task"

    def add_arguments(self, parser):
        add_run_arguments(parser)
        parser.add_argument("--demos", type=str, help="Demonstration directory to write")
        parser.add_argument("--scenes", type=int, default=0, help="Number of generated scenes to add")
        parser.add_argument("--noise", type=float, help="Waypoint noise (m)")
        parser.add_argument("--faces", nargs="+", default=list(DEFAULT_FACES), help="Grasp faces to demonstrate")
        parser.add_argument("--nodes", nargs="+", default=list(DEFAULT_NODES), help="Target nodes to demonstrate")
        parser.add_argument("--clear", action="store_true", help="Delete existing demonstrations first")

    def handle(self, *args, **options):
        configure_logging(options)
        cfg = run_config(
            options,
            paths={"demos": options["demos"]},
            planner={"noise": options["noise"]},
            required=("domain", "problem"),
        )
        directory = cfg.path("demos") or cfg.out_dir() / "demos"
        with input_errors("Cannot create demonstrations"):
            task = load_task(cfg.path("domain"), cfg.path("problem"))
            scenes = [load_scene(cfg.path("scene"))] if cfg.path("scene") else []
            scenes.extend(scene_suite(options["scenes"], cfg.seed))
            if not scenes:
                raise ValueError("no scene configured and --scenes is 0")
            features = cfg.data["features"]
            demos = demonstration_set(
                scenes,
                task.domain,
                task.graph,
                seed=cfg.seed,
                noise=float(cfg.planner["noise"]),
                faces=options["faces"],
                nodes=options["nodes"],
                dmp=cfg.dmp_config(),
                duration=float(cfg.data["dmp"]["duration"]),
                frame_types=features["frame_types"],
                holding_predicate=features["holding_predicate"],
                gripper_predicate=features["gripper_predicate"],
            )

        if options["clear"] and directory.is_dir():
            self.stdout.write(f"Clearing {directory}...")
            for path in directory.glob("*.json"):
                path.unlink()
        for demo in demos:
            save_demonstration(demo, directory)
        for scene in scenes:
            save_scene(scene, directory / "scenes" / f"{scene.name}.json")

        expected = len(scenes) * len(options["faces"]) * len(options["nodes"])
        if len(demos) < expected:
            self.stdout.write(self.style.WARNING(f"{expected - len(demos)} scripted demonstrations were skipped"))
        self.stdout.write(
            self.style.SUCCESS(f"Wrote {len(demos)} demonstrations from {len(scenes)} scenes to {directory}")
        )
