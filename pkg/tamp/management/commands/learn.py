"""
Management command to fit an expert model from a directory of demonstrations.

Usage:
    python manage.py learn --config data/run_config.json
    python manage.py learn --demos data/demos --model out/model.json --k 1
"""

import logging

from django.core.management.base import BaseCommand

from tamp.services.demonstrations import load_demonstrations
from tamp.services.experiment import load_task, write_json
from tamp.services.expert import fit_expert, save_model

from ._common import add_run_arguments, configure_logging, input_errors, require_file, run_config

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Fit per-skill GMMs and the action prior from demonstrations"

    def add_arguments(self, parser):
        add_run_arguments(parser)
        parser.add_argument("--demos", type=str, help="Demonstration directory")
        parser.add_argument("--model", type=str, help="Where to write the model file")
        parser.add_argument("--k", type=int, help="GMM components per skill")

    def handle(self, *args, **options):
        configure_logging(options)
        cfg = run_config(
            options,
            paths={"demos": options["demos"], "model": options["model"]},
            density={"components": options["k"]},
        )
        demos_dir = require_file(cfg.path("demos"), "demonstration directory")

        with input_errors("Cannot learn a model"):
            demos = load_demonstrations(demos_dir)
            initial_key = None
            if cfg.path("domain") and cfg.path("problem"):
                task = load_task(cfg.path("domain"), cfg.path("problem"))
                initial_key = task.graph.states[task.graph.initial].key
            prior = cfg.data["prior"]
            model = fit_expert(
                demos,
                n_components=int(cfg.data["density"]["components"]),
                floor=float(cfg.data["density"]["regularization"]),
                seed=cfg.seed,
                dmp=cfg.dmp_config(),
                prior_floor=float(prior["floor"]),
                prior_overrides=prior.get("overrides") or None,
                initial_state_key=initial_key,
            )

        model_path = cfg.path("model") or cfg.out_dir() / "model.json"
        save_model(model, model_path)
        report = {
            "demos": len(demos),
            "components": model.n_components,
            "skills": {
                name: {
                    "segments": len(skill.sources),
                    "rows": int(skill.features.shape[0]),
                    "dimension": skill.schema.dimension,
                    "mean_log_likelihood": skill.log_likelihood,
                }
                for name, skill in sorted(model.skills.items())
            },
        }
        write_json(report, model_path.with_suffix(".report.json"))

        self.stdout.write(
            f"\nFitted {len(model.skills)} skills from {len(demos)} demonstrations (K={model.n_components})"
        )
        for name, row in report["skills"].items():
            self.stdout.write(
                f"  {name:<10} {row['segments']:>3} segments  {row['rows']:>6} rows  "
                f"mean log-likelihood {row['mean_log_likelihood']:.3f}"
            )
        self.stdout.write(self.style.SUCCESS(f"Saved model to {model_path}"))
