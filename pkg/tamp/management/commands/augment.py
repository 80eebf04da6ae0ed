"""
Management command to add selected successful executions to an expert model.

Usage:
    python manage.py augment --model out/model.json --executions out/executions --select exec-canonical-7
    python manage.py augment --config data/run_config.json --select exec-a exec-b --output out/model_v2.json

Executions are the demonstration files `plan` writes for successful runs.
Only the ids passed to --select are added; the model is refit and written to
--output (default: overwrite --model).
"""

import logging
from pathlib import Path

from django.core.management.base import BaseCommand

from tamp.services.demonstrations import load_demonstration, load_demonstrations
from tamp.services.expert import augment, load_model, save_model

from ._common import add_run_arguments, configure_logging, input_errors, run_config

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Refit an expert model with selected successful executions"

    def add_arguments(self, parser):
        add_run_arguments(parser)
        parser.add_argument("--model", type=str, help="Expert model file")
        parser.add_argument(
            "--executions", nargs="*", default=[], help="Execution files or directories (default: config path)"
        )
        parser.add_argument("--select", nargs="+", required=True, help="Execution ids to add")
        parser.add_argument("--output", type=str, help="Where to write the augmented model")

    def handle(self, *args, **options):
        configure_logging(options)
        cfg = run_config(options, paths={"model": options["model"]}, required=("model",))
        sources = [Path(p) for p in options["executions"]]
        if not sources:
            default = cfg.path("executions") or cfg.out_dir() / "executions"
            sources = [default]

        with input_errors("Cannot augment model"):
            model = load_model(cfg.path("model"))
            executions = []
            for source in sources:
                if source.is_dir():
                    executions.extend(load_demonstrations(source))
                else:
                    executions.append(load_demonstration(source))
            for execution in executions:
                execution.check()
            model = augment(model, executions, list(dict.fromkeys(options["select"])))

        output = Path(options["output"]) if options["output"] else cfg.path("model")
        save_model(model, output)

        rounds = sum(1 for p in model.provenance if p.get("event") == "augment")
        self.stdout.write(f"\nAdded {len(options['select'])} execution(s) from {len(executions)} available")
        for name, skill in sorted(model.skills.items()):
            self.stdout.write(f"  {name:<10} {len(skill.sources):>3} segments")
        self.stdout.write(self.style.SUCCESS(f"Saved augmentation round {rounds} to {output}"))
