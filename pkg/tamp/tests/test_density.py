"""
Tests for Gaussian / GMM densities and weighted fitting.
"""
import math

import numpy as np
from django.test import SimpleTestCase
from scipy.stats import multivariate_normal

from tamp.utils.density import (
    GMM,
    DegenerateWeightsError,
    DensityError,
    DimensionMismatchError,
    Gaussian,
    WeightedSamples,
    density_from_dict,
    fit_gaussian_weighted,
    fit_gmm_weighted,
    regularize,
    weighted_log_likelihood,
)


class GaussianTest(SimpleTestCase):
    def test_log_pdf_matches_scipy(self):
        mean = np.array([0.5, -1.0])
        cov = np.array([[2.0, 0.3], [0.3, 0.5]])
        points = np.array([[0.0, 0.0], [1.0, -2.0], [3.0, 1.0]])
        expected = multivariate_normal(mean, cov).logpdf(points)
        np.testing.assert_allclose(Gaussian(mean, cov).log_pdf(points), expected)

    def test_single_point_returns_float(self):
        value = Gaussian([0.0], [[1.0]]).log_pdf(np.array([0.0]))
        self.assertIsInstance(value, float)
        self.assertAlmostEqual(value, -0.5 * math.log(2 * math.pi))

    def test_far_point_stays_finite(self):
        value = Gaussian([0.0], [[1e-6]]).log_pdf(np.array([100.0]))
        self.assertTrue(math.isfinite(value))
        self.assertLess(value, -1e9)

    def test_not_positive_definite(self):
        with self.assertRaises(DensityError):
            Gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            Gaussian([0.0, 0.0], np.eye(3))
        with self.assertRaises(DimensionMismatchError):
            Gaussian([0.0, 0.0], np.eye(2)).log_pdf(np.zeros((4, 3)))

    def test_sample_statistics(self):
        model = Gaussian([1.0, -2.0], [[0.5, 0.1], [0.1, 0.2]])
        samples = model.sample(np.random.default_rng(0), 20000)
        np.testing.assert_allclose(samples.mean(axis=0), model.mean, atol=0.02)
        np.testing.assert_allclose(np.cov(samples.T), model.cov, atol=0.02)

    def test_regularize(self):
        cov = regularize(np.array([[1.0, 0.2], [0.0, 1.0]]), 0.5)
        np.testing.assert_allclose(cov, [[1.5, 0.1], [0.1, 1.5]])


class GMMTest(SimpleTestCase):
    def setUp(self):
        self.model = GMM(
            np.array([1.0, 3.0]),
            [Gaussian([-1.0], [[0.5]]), Gaussian([2.0], [[1.0]])],
        )

    def test_weights_normalized(self):
        np.testing.assert_allclose(self.model.weights, [0.25, 0.75])

    def test_log_pdf_is_mixture(self):
        x = np.array([[0.3]])
        expected = math.log(
            0.25 * math.exp(self.model.components[0].log_pdf(x)[0])
            + 0.75 * math.exp(self.model.components[1].log_pdf(x)[0])
        )
        self.assertAlmostEqual(self.model.log_pdf(np.array([0.3])), expected)

    def test_invalid_weights(self):
        with self.assertRaises(DensityError):
            GMM(np.array([1.0, 0.0]), self.model.components)
        with self.assertRaises(DensityError):
            GMM(np.array([1.0]), self.model.components)

    def test_serialization(self):
        restored = density_from_dict(self.model.to_dict())
        points = np.linspace(-3, 3, 7)[:, None]
        np.testing.assert_allclose(restored.log_pdf(points), self.model.log_pdf(points))
        with self.assertRaises(DensityError):
            density_from_dict({"kind": "cauchy"})


class WeightedSamplesTest(SimpleTestCase):
    def test_normalization_is_scale_invariant(self):
        samples = np.arange(6.0).reshape(3, 2)
        low = WeightedSamples(samples, np.array([-2000.0, -2001.0, -2003.0]))
        high = WeightedSamples(samples, np.array([0.0, -1.0, -3.0]))
        np.testing.assert_allclose(low.normalized, high.normalized)
        self.assertAlmostEqual(low.normalized.sum(), 1.0)

    def test_zero_weights(self):
        ws = WeightedSamples.from_weights(np.zeros((2, 1)), np.array([0.0, 0.0]))
        self.assertFalse(ws.has_mass)
        with self.assertRaises(DegenerateWeightsError):
            ws.normalized
        with self.assertRaises(DensityError):
            WeightedSamples.from_weights(np.zeros((2, 1)), np.array([1.0, -1.0]))

    def test_length_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            WeightedSamples(np.zeros((3, 2)), np.zeros(2))

    def test_effective_sample_size(self):
        self.assertAlmostEqual(WeightedSamples.uniform(np.zeros((4, 1))).effective_sample_size(), 4.0)


class WeightedFitTest(SimpleTestCase):
    def test_uniform_weights_give_sample_moments(self):
        X = np.random.default_rng(1).normal(size=(50, 3))
        fit = fit_gaussian_weighted(WeightedSamples.uniform(X), floor=1e-6)
        np.testing.assert_allclose(fit.mean, X.mean(axis=0))
        np.testing.assert_allclose(fit.cov, np.cov(X.T, bias=True) + 1e-6 * np.eye(3))

    def test_weights_act_like_duplicates(self):
        X = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]])
        weighted = fit_gaussian_weighted(WeightedSamples.from_weights(X, np.array([2.0, 1.0, 1.0])))
        duplicated = fit_gaussian_weighted(WeightedSamples.uniform(np.vstack([X[:1], X])))
        np.testing.assert_allclose(weighted.mean, duplicated.mean)
        np.testing.assert_allclose(weighted.cov, duplicated.cov)

    def test_single_heavy_sample_collapses_to_floor(self):
        X = np.array([[1.0, 1.0], [5.0, 5.0]])
        fit = fit_gaussian_weighted(WeightedSamples.from_weights(X, np.array([1.0, 0.0])), floor=1e-3)
        np.testing.assert_allclose(fit.mean, [1.0, 1.0])
        np.testing.assert_allclose(fit.cov, 1e-3 * np.eye(2))

    def test_em_separates_clusters(self):
        rng = np.random.default_rng(0)
        X = np.vstack([rng.normal([-5.0, 0.0], 0.5, (100, 2)), rng.normal([5.0, 0.0], 0.5, (100, 2))])
        history = []
        model = fit_gmm_weighted(WeightedSamples.uniform(X), 2, seed=0, history=history)
        means = sorted(c.mean[0] for c in model.components)
        self.assertAlmostEqual(means[0], -5.0, delta=0.3)
        self.assertAlmostEqual(means[1], 5.0, delta=0.3)
        np.testing.assert_allclose(model.weights, [0.5, 0.5], atol=0.05)
        self.assertTrue(all(b >= a for a, b in zip(history, history[1:])))

    def test_em_is_seeded(self):
        X = np.random.default_rng(2).normal(size=(60, 2))
        first = fit_gmm_weighted(WeightedSamples.uniform(X), 3, seed=4)
        second = fit_gmm_weighted(WeightedSamples.uniform(X), 3, seed=4)
        np.testing.assert_allclose(first.log_pdf(X), second.log_pdf(X))

    def test_em_weighted_beats_unweighted_on_heavy_cluster(self):
        rng = np.random.default_rng(3)
        X = np.vstack([rng.normal(-3.0, 0.3, (50, 1)), rng.normal(3.0, 0.3, (50, 1))])
        weights = np.r_[np.full(50, 1e-6), np.ones(50)]
        ws = WeightedSamples.from_weights(X, weights)
        model = fit_gmm_weighted(ws, 1)
        self.assertAlmostEqual(model.components[0].mean[0], 3.0, delta=0.2)
        self.assertGreater(weighted_log_likelihood(model, ws), weighted_log_likelihood(
            fit_gmm_weighted(WeightedSamples.uniform(X), 1), ws))

    def test_too_few_samples(self):
        with self.assertRaises(DensityError):
            fit_gmm_weighted(WeightedSamples.uniform(np.zeros((2, 1))), 3)


def longdouble_fit(X, weights, floor):
    """Weighted moments summed term by term in extended precision."""
    X = X.astype(np.longdouble)
    w = weights.astype(np.longdouble)
    w = w / w.sum()
    mean = sum(wj * xj for wj, xj in zip(w, X))
    cov = sum(wj * np.outer(xj - mean, xj - mean) for wj, xj in zip(w, X))
    return mean, cov + np.longdouble(floor) * np.eye(X.shape[1], dtype=np.longdouble)


class FitOracleTest(SimpleTestCase):
    def test_gaussian_fit_matches_extended_precision(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            d = int(rng.integers(1, 7))
            m = int(rng.integers(d + 1, 51))
            X = rng.normal(rng.uniform(-2.0, 2.0, d), rng.uniform(0.1, 2.0, d), (m, d))
            weights = rng.exponential(size=m) * 10.0 ** rng.uniform(-100.0, 100.0)
            fit = fit_gaussian_weighted(WeightedSamples.from_weights(X, weights), floor=1e-6)
            mean, cov = longdouble_fit(X, weights, 1e-6)
            np.testing.assert_allclose(fit.mean, mean.astype(float), rtol=0.0, atol=1e-9)
            np.testing.assert_allclose(fit.cov, cov.astype(float), rtol=0.0, atol=1e-9)

    def test_em_never_lowers_weighted_likelihood(self):
        rng = np.random.default_rng(12)
        for dataset in range(50):
            d = int(rng.integers(1, 4))
            k = int(rng.integers(1, 5))
            centers = rng.uniform(-4.0, 4.0, (k, d))
            X = np.vstack([rng.normal(c, rng.uniform(0.2, 1.5), (int(rng.integers(10, 40)), d)) for c in centers])
            log_weights = rng.normal(0.0, 2.0, len(X))
            history = []
            fit_gmm_weighted(WeightedSamples(X, log_weights), k, seed=dataset, history=history)
            self.assertGreaterEqual(len(history), 1)
            steps = np.diff(history)
            self.assertTrue(np.all(steps >= -1e-9), f"dataset {dataset}: {steps.min()}")


class ScaleInvarianceTest(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(13)
        self.X = np.vstack([rng.normal(-2.0, 0.5, (30, 2)), rng.normal(2.0, 0.8, (30, 2))])
        self.log_weights = rng.normal(0.0, 1.0, 60)

    def scaled(self, shift):
        return WeightedSamples(self.X, self.log_weights + shift)

    def test_gaussian_fit(self):
        reference = fit_gaussian_weighted(self.scaled(0.0))
        for shift in (-40.0, 40.0):
            fit = fit_gaussian_weighted(self.scaled(shift))
            np.testing.assert_allclose(fit.mean, reference.mean, rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(fit.cov, reference.cov, rtol=1e-12, atol=1e-12)

    def test_gmm_fit(self):
        reference = fit_gmm_weighted(self.scaled(0.0), 2, seed=1)
        for shift in (-40.0, 40.0):
            fit = fit_gmm_weighted(self.scaled(shift), 2, seed=1)
            np.testing.assert_allclose(fit.weights, reference.weights, rtol=1e-12, atol=1e-12)
            for ours, theirs in zip(fit.components, reference.components):
                np.testing.assert_allclose(ours.mean, theirs.mean, rtol=1e-12, atol=1e-12)
                np.testing.assert_allclose(ours.cov, theirs.cov, rtol=1e-12, atol=1e-12)

    def test_weighted_log_likelihood(self):
        model = fit_gaussian_weighted(self.scaled(0.0))
        self.assertAlmostEqual(
            weighted_log_likelihood(model, self.scaled(-700.0)),
            weighted_log_likelihood(model, self.scaled(0.0)),
            places=10,
        )
