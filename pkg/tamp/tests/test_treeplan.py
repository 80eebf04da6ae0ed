"""
Tests for the action prior, sample allocation and recursive tree planning.
"""
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from tamp.constants import MODE_BASELINE, MODE_FULL, MODE_NO_LOOKAHEAD, MODE_NO_OPTIONS
from tamp.tests.toy import SCENE, ReachLibrary, reference_expert, surrogate, tiny_graph
from tamp.utils.cem import CemConfig, PlanningError, optimize
from tamp.utils.density import Gaussian
from tamp.utils.treeplan import (
    ActionPrior,
    QVTable,
    TreeConfig,
    TreePlanner,
    allocate,
    execute,
    fit_action_prior,
    mode_settings,
    random_task_plan,
)

QUICK = CemConfig(samples=8, max_iterations=2, tolerance=0.0)


class ActionPriorTest(SimpleTestCase):
    def setUp(self):
        self.prior = fit_action_prior([("s", "push"), ("s", "push"), ("s", "pull"), ("t", "wait")], floor=0.01)

    def test_empirical(self):
        self.assertEqual(self.prior.empirical("s"), {"pull": 1 / 3, "push": 2 / 3})
        self.assertEqual(self.prior.empirical("unknown"), {})

    def test_distribution_is_floored(self):
        p = self.prior.distribution("s", ["push", "pull", "lift"])
        self.assertAlmostEqual(sum(p.values()), 1.0)
        self.assertGreater(p["lift"], 0.0)
        self.assertGreater(p["push"], p["pull"])

    def test_unseen_state_is_uniform(self):
        with self.assertLogs("tamp.utils.treeplan", level="WARNING"):
            p = self.prior.distribution("unknown", ["a", "b"])
        self.assertEqual(p, {"a": 0.5, "b": 0.5})

    def test_overrides_take_precedence(self):
        prior = fit_action_prior([("s", "push")], overrides={"s": {"pull": 1.0}}, floor=1e-3)
        p = prior.distribution("s", ["push", "pull"])
        self.assertGreater(p["pull"], 0.99)

    def test_round_trip(self):
        restored = ActionPrior.from_dict(self.prior.to_dict())
        self.assertEqual(restored.counts, self.prior.counts)
        self.assertEqual(restored.floor, 0.01)


class AllocationTest(SimpleTestCase):
    def test_largest_remainder(self):
        self.assertEqual(allocate([0.5, 0.5], 5), [3, 2])
        self.assertEqual(allocate([0.2, 0.3, 0.5], 10), [2, 3, 5])

    def test_every_live_action_gets_a_sample(self):
        self.assertEqual(allocate([0.9, 0.1], 3), [3, 1])
        self.assertEqual(allocate([1.0, 1e-12], 4), [4, 0])
        self.assertEqual(allocate([], 4), [])


class QVTableTest(SimpleTestCase):
    def test_value_is_prior_weighted_q(self):
        table = QVTable()
        log_v = table.record((), {1: 0.25, 2: 0.75}, {1: np.log([0.4, 1.0]), 2: np.log([0.8, 1e-300])})
        np.testing.assert_allclose(np.exp(log_v), [0.25 * 0.4 + 0.75 * 0.8, 0.25])
        self.assertLess(table.identity_error(), 1e-12)


class ModeTest(SimpleTestCase):
    def test_mode_settings(self):
        self.assertEqual(mode_settings(MODE_FULL, 5), (5, False))
        self.assertEqual(mode_settings(MODE_NO_LOOKAHEAD, 5), (1, False))
        self.assertEqual(mode_settings(MODE_NO_OPTIONS, 5), (5, True))
        self.assertEqual(mode_settings(MODE_BASELINE, 5), (0, True))
        with self.assertRaises(ValueError):
            mode_settings("greedy", 5)

    def test_random_task_plan(self):
        graph = tiny_graph()
        plan = random_task_plan(graph, np.random.default_rng(0))
        self.assertIn(plan, graph.goal_paths())
        self.assertEqual(plan, random_task_plan(graph, np.random.default_rng(0)))

    def test_no_task_plan(self):
        graph = mock.Mock()
        graph.goal_paths.return_value = []
        with self.assertRaises(PlanningError):
            random_task_plan(graph, np.random.default_rng(0))

    def test_negative_horizon(self):
        with self.assertRaises(ValueError):
            TreeConfig(horizon=-1)


class TreePlannerTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.expert = reference_expert()

    def setUp(self):
        self.graph = tiny_graph()
        self.library = ReachLibrary(expert=self.expert)

    def test_plan_reaches_goal_with_chained_trajectories(self):
        planner = TreePlanner(self.graph, SCENE, self.library, TreeConfig(cem=QUICK))
        result = planner.plan(SCENE.start_state(), np.random.default_rng(0))
        self.assertFalse(result.failed, result.reason)
        self.assertTrue(result.goal_reached)
        self.assertEqual(len(result.actions), 2)
        self.assertEqual(sorted(result.labels), ["take a", "take b"])
        self.assertEqual(result.trajectories[1].start, result.trajectories[0].final_state)
        self.assertEqual(len(result.value_history), 2)
        self.assertAlmostEqual(sum(result.root_policy.values()), 1.0)
        # one surrogate per tree node: two roots and one child below each
        self.assertEqual(self.library.surrogate_calls, 4)

    def test_plan_document(self):
        planner = TreePlanner(self.graph, SCENE, self.library, TreeConfig(cem=QUICK))
        data = planner.plan(SCENE.start_state(), np.random.default_rng(0)).to_dict()
        self.assertFalse(data["failed"])
        self.assertEqual(sorted(data["actions"][0]), ["id", "label", "source", "target"])
        self.assertEqual(len(data["params"]), 2)
        self.assertEqual(len(data["iterations"]), 2)

    def test_goal_at_start(self):
        graph = tiny_graph(goal="(:goal)")
        result = TreePlanner(graph, SCENE, self.library, TreeConfig(cem=QUICK)).plan(
            SCENE.start_state(), np.random.default_rng(0)
        )
        self.assertTrue(result.goal_reached)
        self.assertEqual(result.actions, [])

    def test_exhausted_root_actions_fail(self):
        out_of_reach = Gaussian(np.r_[np.zeros(15), 3.0, 0.0, 0.0], 1e-6 * np.eye(18))
        library = ReachLibrary(v0=out_of_reach, expert=self.expert)
        cfg = TreeConfig(cem=CemConfig(samples=4, rejection_factor=1, max_iterations=1))
        result = execute(self.graph, SCENE, library, cfg, SCENE.start_state(), np.random.default_rng(0))
        self.assertTrue(result.failed)
        self.assertEqual(result.reason, "rejection budget exhausted for every root action")

    def test_baseline_commits_one_action_at_a_time(self):
        result = execute(
            self.graph,
            SCENE,
            self.library,
            TreeConfig(cem=QUICK),
            SCENE.start_state(),
            np.random.default_rng(0),
            mode=MODE_BASELINE,
        )
        self.assertFalse(result.failed, result.reason)
        self.assertTrue(result.goal_reached)
        self.assertEqual(len(result.actions), 2)
        self.assertEqual(result.replans, 1)
        self.assertIn([a.id for a in result.actions], self.graph.goal_paths())
        self.assertEqual(result.trajectories[1].start, result.trajectories[0].final_state)


class HorizonZeroTest(SimpleTestCase):
    """With no lookahead and a single action the planner is plain CEM."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.expert = reference_expert()

    def test_matches_single_action_cem(self):
        graph = tiny_graph(goal="(:goal (and (gone a)))")
        take_a = next(e for e in graph.actions_from(graph.initial) if e.label == "take a")
        v0 = surrogate((0.35, 0.45, 0.25), position_std=0.03)
        cem = CemConfig(samples=30, max_iterations=15)
        for seed in (0, 1, 2, 3):
            with self.subTest(seed=seed):
                library = ReachLibrary(v0=v0, expert=self.expert)
                planner = TreePlanner(graph, SCENE, library, TreeConfig(cem=cem, horizon=0), allowed={take_a.id})
                planned = planner.plan(SCENE.start_state(), np.random.default_rng(seed))
                optimized = optimize(
                    library.context(take_a), v0, SCENE.start_state(), SCENE, cem, np.random.default_rng(seed)
                )
                self.assertFalse(planned.failed, planned.reason)
                self.assertEqual(planned.labels, ["take a"])
                self.assertEqual(len(planned.stats), len(optimized.reports))
                self.assertEqual(
                    [s.mean_log_likelihood for s in planned.stats],
                    [r.mean_log_likelihood for r in optimized.reports],
                )
                np.testing.assert_array_equal(planned.surrogates[0].mean, optimized.surrogate.mean)
                np.testing.assert_array_equal(planned.surrogates[0].cov, optimized.surrogate.cov)
