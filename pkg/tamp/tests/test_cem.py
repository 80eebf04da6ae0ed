"""
Tests for rejection sampling and the cross-entropy update.
"""
import math

import numpy as np
from django.test import SimpleTestCase

from tamp.services.simulator import CircleObstacle, RobotState
from tamp.tests.toy import DMP, REFERENCE, SCENE, context, goal_of, reference_expert, surrogate
from tamp.utils.cem import (
    CemConfig,
    InvalidStartError,
    RejectionBudgetExceeded,
    StartSet,
    blend,
    converged,
    optimize,
    sample_valid,
    weigh,
)
from tamp.utils.density import GMM, Gaussian
from tamp.utils.dmp import vector_as_params


def goal_distance(v: Gaussian) -> float:
    goal = vector_as_params(v.mean, SCENE.arm.n_joints, DMP.n_basis).goal
    return goal.distance(goal_of(REFERENCE))


class CemConfigTest(SimpleTestCase):
    def test_defaults(self):
        cfg = CemConfig()
        self.assertEqual(cfg.samples, 200)
        self.assertEqual(cfg.rejection_budget, 50 * 200)

    def test_invalid(self):
        for kwargs in ({"step_size": 0.0}, {"step_size": 1.0}, {"samples": 1}, {"rejection_factor": 0}):
            with self.subTest(**kwargs), self.assertRaises(ValueError):
                CemConfig(**kwargs)


class StartSetTest(SimpleTestCase):
    def setUp(self):
        # midpoint of the first link with the arm stretched along x
        self.scene = SCENE.with_obstacles(CircleObstacle("post", 0.2, 0.0, 0.05))
        self.bad = RobotState((0.0, 0.0, 0.0))
        self.good = RobotState((1.5, 0.0, 0.0))

    def test_probabilities(self):
        starts = StartSet((self.bad, self.good), np.log([1.0, 3.0]))
        np.testing.assert_allclose(starts.probabilities, [0.25, 0.75])

    def test_invalid_states_are_dropped(self):
        starts = StartSet((self.bad, self.good), np.zeros(2)).only_valid(self.scene)
        np.testing.assert_allclose(starts.probabilities, [0.0, 1.0])
        with self.assertRaises(InvalidStartError):
            StartSet.single(self.bad).only_valid(self.scene)

    def test_shape_checks(self):
        with self.assertRaises(ValueError):
            StartSet((self.good,), np.zeros(2))
        with self.assertRaises(InvalidStartError):
            StartSet((self.good,), np.array([-np.inf]))

    def test_single_start_draws_nothing(self):
        rng = np.random.default_rng(0)
        before = rng.bit_generator.state
        np.testing.assert_array_equal(StartSet.single(self.good).draw(rng, 4), np.zeros(4))
        self.assertEqual(rng.bit_generator.state, before)


class WeighAndBlendTest(SimpleTestCase):
    def test_underflow_falls_back_to_uniform(self):
        samples = np.zeros((3, 2))
        with self.assertLogs("tamp.utils.cem", level="WARNING"):
            ws = weigh(np.full((3, 4), -np.inf), samples)
        np.testing.assert_allclose(ws.normalized, np.full(3, 1 / 3))

    def test_downstream_values_scale_weights(self):
        ws = weigh(np.zeros((2, 2)), np.zeros((2, 1)), np.array([0.0, -np.inf]))
        np.testing.assert_allclose(ws.log_weights, [math.log(2.0), -np.inf])
        np.testing.assert_allclose(ws.normalized, [1.0, 0.0])

    def test_blend_is_convex(self):
        a = Gaussian([0.0, 0.0], np.eye(2))
        b = Gaussian([2.0, 4.0], 3 * np.eye(2))
        mid = blend(a, b, 0.5)
        np.testing.assert_allclose(mid.mean, [1.0, 2.0])
        np.testing.assert_allclose(mid.cov, 2 * np.eye(2))
        np.testing.assert_allclose(blend(a, b, 0.0).mean, a.mean)

    def test_blend_mixtures(self):
        a = GMM(np.array([0.5, 0.5]), [Gaussian([0.0], [[1.0]]), Gaussian([1.0], [[1.0]])])
        b = GMM(np.array([0.9, 0.1]), [Gaussian([2.0], [[1.0]]), Gaussian([3.0], [[1.0]])])
        mixed = blend(a, b, 0.5)
        np.testing.assert_allclose(mixed.weights, [0.7, 0.3])
        self.assertAlmostEqual(mixed.components[1].mean[0], 2.0)

    def test_blend_rejects_bad_input(self):
        a = Gaussian([0.0], [[1.0]])
        with self.assertRaises(ValueError):
            blend(a, a, 1.5)
        with self.assertRaises(TypeError):
            blend(a, GMM(np.array([1.0]), [a]), 0.5)

    def test_converged(self):
        self.assertFalse(converged(None, -10.0, 1e-3))
        self.assertTrue(converged(-100.0, -100.05, 1e-3))
        self.assertFalse(converged(-100.0, -90.0, 1e-3))
        self.assertFalse(converged(-np.inf, -90.0, 1e-3))


class SampleValidTest(SimpleTestCase):
    def setUp(self):
        self.ctx = context()

    def test_returns_exactly_count_valid_rollouts(self):
        cfg = CemConfig(samples=5)
        batch, rejections = sample_valid(
            surrogate(REFERENCE), 7, SCENE.start_state(), SCENE, self.ctx, cfg, np.random.default_rng(1)
        )
        self.assertEqual(len(batch), 7)
        self.assertTrue(batch.valid.all())
        self.assertGreaterEqual(rejections, 0)
        np.testing.assert_array_equal(batch.start_index, np.zeros(7))

    def test_rejection_budget(self):
        out_of_reach = Gaussian(np.r_[np.zeros(15), 3.0, 0.0, 0.0], 1e-6 * np.eye(18))
        cfg = CemConfig(samples=5, rejection_factor=2)
        with self.assertRaises(RejectionBudgetExceeded) as ctx:
            sample_valid(out_of_reach, 5, SCENE.start_state(), SCENE, self.ctx, cfg, np.random.default_rng(0))
        self.assertEqual(ctx.exception.draws, 10)
        self.assertEqual(ctx.exception.accepted, 0)

    def test_count_must_be_positive(self):
        with self.assertRaises(ValueError):
            sample_valid(surrogate(REFERENCE), 0, SCENE.start_state(), SCENE, self.ctx, CemConfig(), None)


class OptimizeTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.expert = reference_expert()

    def test_surrogate_moves_toward_expert(self):
        v0 = surrogate((0.35, 0.45, 0.25), position_std=0.03)
        cfg = CemConfig(samples=30, max_iterations=6, tolerance=0.0)
        result = optimize(context(expert=self.expert), v0, SCENE.start_state(), SCENE, cfg, np.random.default_rng(3))
        self.assertEqual(len(result.reports), 6)
        self.assertLess(goal_distance(result.surrogate), goal_distance(v0))
        self.assertTrue(result.best.valid)
        self.assertTrue(np.isfinite(result.best_log_weight))
        self.assertEqual(result.reports[0].to_row()["iteration"], 0)

    def test_zero_iterations_samples_once(self):
        v0 = surrogate(REFERENCE)
        cfg = CemConfig(samples=10, max_iterations=0)
        result = optimize(context(expert=self.expert), v0, SCENE.start_state(), SCENE, cfg, np.random.default_rng(0))
        self.assertIs(result.surrogate, v0)
        self.assertEqual(len(result.reports), 1)

    def test_seeded_runs_match(self):
        v0 = surrogate(REFERENCE)
        cfg = CemConfig(samples=10, max_iterations=2, tolerance=0.0)
        runs = [
            optimize(context(expert=self.expert), v0, SCENE.start_state(), SCENE, cfg, np.random.default_rng(9))
            for _ in range(2)
        ]
        np.testing.assert_array_equal(runs[0].surrogate.mean, runs[1].surrogate.mean)
        self.assertEqual(runs[0].best_log_weight, runs[1].best_log_weight)

    def test_likelihood_climbs_then_settles(self):
        v0 = surrogate((0.35, 0.45, 0.25), position_std=0.03)
        cfg = CemConfig(samples=200, step_size=0.5, max_iterations=15)
        result = optimize(context(expert=self.expert), v0, SCENE.start_state(), SCENE, cfg, np.random.default_rng(5))
        means = [r.mean_log_likelihood for r in result.reports]
        climbs = longest = 0
        for before, after in zip(means, means[1:]):
            climbs = climbs + 1 if after > before else 0
            longest = max(longest, climbs)
        self.assertGreaterEqual(longest, 5, means)
        self.assertLessEqual(len(means), 15)
        self.assertTrue(converged(means[-2], means[-1], cfg.tolerance), means)
