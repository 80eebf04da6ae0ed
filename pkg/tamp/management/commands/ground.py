"""
Management command to ground a PDDL domain/problem pair into the task graph.

Usage:
    python manage.py ground --config data/run_config.json
    python manage.py ground --domain data/structure.pddl --problem data/problem.pddl --out out

Writes task_graph.json and task_graph.dot into --out.
"""

import logging

from django.core.management.base import BaseCommand

from tamp.services.experiment import load_task

from ._common import add_run_arguments, configure_logging, input_errors, run_config

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Ground a PDDL task into the graph of predicate states and actions"

    def add_arguments(self, parser):
        add_run_arguments(parser)
        parser.add_argument("--domain", type=str, help="PDDL domain file")
        parser.add_argument("--problem", type=str, help="PDDL problem file")
        parser.add_argument("--max-states", type=int, help="Stop expanding after this many states")
        parser.add_argument("--paths", action="store_true", help="List every action sequence reaching the goal")

    def handle(self, *args, **options):
        configure_logging(options)
        cfg = run_config(
            options,
            paths={"domain": options["domain"], "problem": options["problem"]},
            required=("domain", "problem"),
        )
        with input_errors("Cannot ground task"):
            task = load_task(cfg.path("domain"), cfg.path("problem"), options["max_states"])

        graph = task.graph
        out = cfg.out_dir()
        out.mkdir(parents=True, exist_ok=True)
        (out / "task_graph.json").write_text(graph.to_json(), encoding="utf-8")
        (out / "task_graph.dot").write_text(graph.to_dot(), encoding="utf-8")

        paths = graph.goal_paths()
        self.stdout.write(f"\n{task.domain.name}/{task.problem.name}")
        self.stdout.write(f"  states:     {len(graph.states)}")
        self.stdout.write(f"  actions:    {len(graph.edges)}")
        self.stdout.write(f"  goals:      {len(graph.goals)}")
        self.stdout.write(f"  goal paths: {len(paths)}")
        if options["paths"]:
            for path in paths:
                self.stdout.write("    " + " -> ".join(graph.edges[e].label for e in path))
        if not paths:
            self.stdout.write(self.style.WARNING("No action sequence reaches the goal"))
        self.stdout.write(self.style.SUCCESS(f"Wrote task graph to {out}"))
