"""
Tests for run configuration validation.
"""
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from tamp.utils.config_schema import format_validation_errors, validate_run_config


class ConfigSchemaTest(SimpleTestCase):
    def errors(self, config, **kwargs):
        valid, errors = validate_run_config(config, check_files=False, **kwargs)
        self.assertEqual(valid, not errors)
        return {e.path for e in errors}

    def test_empty_config_is_valid(self):
        self.assertEqual(self.errors({}), set())

    def test_full_config(self):
        config = {
            "paths": {"domain": "d.pddl", "problem": "p.pddl", "out": "out"},
            "mode": "no-options",
            "planner": {"samples": 60, "step_size": 0.5, "horizon": 5, "seed": 3},
            "density": {"components": 3, "regularization": 1e-6},
            "dmp": {"dt": 0.02, "duration": 2.0, "n_basis": 5},
            "features": {"frame_types": ["face"], "holding_predicate": "holding"},
            "prior": {
                "floor": 0.001,
                "overrides": {"initial": {"approach link1 front": 0.6, "approach link1 left": 0.4}},
            },
        }
        self.assertEqual(self.errors(config), set())

    def test_unknown_keys(self):
        self.assertEqual(
            self.errors({"plotting": {}, "paths": {"cache": "x"}, "planner": {"beam": 2}}),
            {"plotting", "paths.cache", "planner.beam"},
        )

    def test_ranges(self):
        config = {
            "planner": {"samples": 1, "step_size": 1.0, "horizon": 2.5, "noise": True},
            "density": {"regularization": 0.0},
            "mode": "greedy",
        }
        self.assertEqual(
            self.errors(config),
            {
                "planner.samples",
                "planner.step_size",
                "planner.horizon",
                "planner.noise",
                "density.regularization",
                "mode",
            },
        )

    def test_required_paths(self):
        errors = self.errors({"paths": {"domain": "d.pddl"}}, required_paths=("domain", "problem"))
        self.assertEqual(errors, {"paths.problem"})

    def test_missing_files_resolved_against_base_dir(self):
        with tempfile.TemporaryDirectory() as tmp:
            (Path(tmp) / "d.pddl").write_text("")
            config = {"paths": {"domain": "d.pddl", "problem": "p.pddl", "model": "m.json"}}
            valid, errors = validate_run_config(config, base_dir=Path(tmp))
        self.assertFalse(valid)
        self.assertEqual([e.path for e in errors], ["paths.problem"])

    def test_prior_overrides(self):
        config = {"prior": {"floor": 1.0, "overrides": {"initial": {"a": 0.5, "b": 0.2}, "other": {"a": -1}}}}
        self.assertEqual(
            self.errors(config),
            {"prior.floor", "prior.overrides['initial']", "prior.overrides['other']"},
        )

    def test_format(self):
        _, errors = validate_run_config([], check_files=False)
        self.assertEqual(
            format_validation_errors(errors), "Run configuration validation errors:\n  - Config must be a dictionary"
        )
        self.assertEqual(format_validation_errors([]), "No errors")
