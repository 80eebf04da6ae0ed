"""
Tests for the management commands. Planning itself is mocked; these check
argument handling, exit codes and the files each command writes.
"""
import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from tamp.models import ExperimentRun
from tamp.services.expert import load_model
from tamp.utils.cem import PlanningError

DATA_DIR = settings.BASE_DIR / "data"


class CommandTestCase(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.config = self.dir / "run.json"
        self.config.write_text(
            json.dumps(
                {
                    "paths": {
                        "domain": str(DATA_DIR / "structure.pddl"),
                        "problem": str(DATA_DIR / "problem.pddl"),
                        "scene": str(DATA_DIR / "scenes" / "canonical.json"),
                        "model": str(self.dir / "model.json"),
                        "out": str(self.dir / "out"),
                    }
                }
            )
        )

    def tearDown(self):
        self.tmp.cleanup()

    def call(self, name, /, **options):
        out = StringIO()
        call_command(name, stdout=out, **options)
        return out.getvalue()


class GroundCommandTest(CommandTestCase):
    def test_writes_graph(self):
        output = self.call("ground", config=str(self.config), paths=True)
        self.assertIn("states:     11", output)
        self.assertIn("goal paths: 6", output)
        self.assertTrue((self.dir / "out" / "task_graph.json").exists())
        self.assertTrue((self.dir / "out" / "task_graph.dot").read_text().startswith("digraph"))

    def test_missing_problem(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("ground", domain=str(DATA_DIR / "structure.pddl"), out=str(self.dir))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_malformed_domain(self):
        broken = self.dir / "broken.pddl"
        broken.write_text("(define (domain broken)")
        with self.assertRaises(CommandError) as ctx:
            self.call("ground", domain=str(broken), problem=str(DATA_DIR / "problem.pddl"), out=str(self.dir))
        self.assertEqual(ctx.exception.returncode, 2)


class RenderCommandTest(CommandTestCase):
    def test_scene(self):
        target = self.dir / "scene.svg"
        self.call("render", scene=str(DATA_DIR / "scenes" / "canonical.json"), svg=str(target))
        self.assertIn("<svg", target.read_text())

    def test_missing_plan_file(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("render", plan=str(self.dir / "plan.json"))
        self.assertEqual(ctx.exception.returncode, 2)


class LearnCommandTest(CommandTestCase):
    def test_learns_from_scripted_demonstrations(self):
        demos = self.dir / "demos"
        self.call("create_demos", config=str(self.config), demos=str(demos))
        self.assertEqual(len(list(demos.glob("*.json"))), 6)
        output = self.call("learn", config=str(self.config), demos=str(demos), k=1)
        self.assertIn("Fitted 5 skills from 6 demonstrations (K=1)", output)
        model = load_model(self.dir / "model.json")
        self.assertEqual(model.covers(["approach", "grasp", "align", "place", "release"]), [])
        self.assertTrue((self.dir / "model.report.json").exists())

    def test_missing_demonstrations(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("learn", demos=str(self.dir / "demos"), model=str(self.dir / "model.json"))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_empty_demonstrations(self):
        (self.dir / "demos").mkdir()
        with self.assertRaises(CommandError) as ctx:
            self.call("learn", demos=str(self.dir / "demos"))
        self.assertEqual(ctx.exception.returncode, 2)


class PlanCommandTest(CommandTestCase):
    @mock.patch("tamp.management.commands.plan.BoundModel")
    @mock.patch("tamp.management.commands.plan.load_model")
    @mock.patch("tamp.management.commands.plan.execute", side_effect=PlanningError("stuck"))
    def test_planning_failure_exit_code(self, execute, load_model, bound_model):
        load_model.return_value.covers.return_value = []
        with self.assertLogs("tamp.management.commands.plan", level="ERROR"):
            with self.assertRaises(CommandError) as ctx:
                self.call("plan", config=str(self.config), seed=4)
        self.assertEqual(ctx.exception.returncode, 1)
        plan = json.loads((self.dir / "out" / "plan.json").read_text())
        self.assertEqual(plan, {"failed": True, "reason": "stuck", "seed": 4})
        self.assertEqual(execute.call_args.args[-1], "full")

    @mock.patch("tamp.management.commands.plan.load_model")
    def test_model_missing_skills(self, load_model):
        load_model.return_value.covers.return_value = ["release"]
        with self.assertRaisesMessage(CommandError, "release") as ctx:
            self.call("plan", config=str(self.config))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_invalid_config(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("plan", config=str(self.dir / "absent.json"))
        self.assertEqual(ctx.exception.returncode, 2)


class ExperimentCommandTest(CommandTestCase):
    @mock.patch("tamp.management.commands.experiment.load_model")
    def test_no_trials(self, load_model):
        output = self.call("experiment", config=str(self.config), trials=0, name="empty")
        self.assertIn("0 scenes x 4 modes", output)
        out = self.dir / "out"
        self.assertEqual(
            (out / "summary.csv").read_text(),
            "mode,augmented,trials,failures,median_error,mean_error,median_error_x,median_error_y\n",
        )
        self.assertTrue((out / "trials.csv").read_text().startswith("scene,mode,augmented,seed,failed"))
        run = ExperimentRun.objects.get(name="empty")
        self.assertEqual(run.scene_count, 0)
        self.assertEqual(run.modes, ["full", "no-lookahead", "no-options", "baseline"])

    def test_negative_trials(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("experiment", config=str(self.config), trials=-1)
        self.assertEqual(ctx.exception.returncode, 2)
