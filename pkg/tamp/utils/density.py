"""
Parametric densities used both for expert feature models p_d(x|a) and for the
surrogate trajectory distribution π(ξ|v).

All evaluation happens in log space. Weighted fits take a `WeightedSamples`
whose weights are kept as log z_j and normalized by max-shift exponentiation,
so they never underflow and are invariant to any common scale factor.

Serialized form (JSON-structured, row-major matrices):

    {"kind": "gaussian", "dimension": d, "mean": [...], "covariance": [[...], ...]}
    {"kind": "gmm", "dimension": d, "weights": [...], "components": [<gaussian>, ...]}
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from tamp.constants import EM_MAX_ITERATIONS, EM_TOLERANCE

logger = logging.getLogger(__name__)

DEFAULT_FLOOR = 1e-6
_LOG_2PI = np.log(2.0 * np.pi)


class DensityError(Exception):
    """Base exception for density evaluation and fitting."""

    pass


class DimensionMismatchError(DensityError):
    """Raised when a point or sample set does not match the model dimension."""

    pass


class DegenerateWeightsError(DensityError):
    """Raised when a weighted fit receives no positive weight."""

    pass


def regularize(cov: np.ndarray, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Add `floor` to the diagonal of a (symmetrized) covariance matrix."""
    cov = np.asarray(cov, dtype=float)
    cov = 0.5 * (cov + cov.T)
    return cov + floor * np.eye(cov.shape[0])


@dataclass(frozen=True, eq=False)
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatchError(
                f"Covariance shape {cov.shape} does not match mean of length {mean.size}"
            )
        cov = 0.5 * (cov + cov.T)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise DensityError(f"Covariance is not positive definite: {e}") from e
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_pdf(self, x: np.ndarray) -> Union[float, np.ndarray]:
        """Log density of one point (d,) or of each row of (n, d)."""
        points = np.asarray(x, dtype=float)
        single = points.ndim == 1
        points = np.atleast_2d(points)
        if points.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"Point dimension {points.shape[1]} does not match model dimension {self.dim}"
            )
        diff = (points - self.mean).T
        soln = scipy.linalg.solve_triangular(self._chol, diff, lower=True)
        logp = (
            -0.5 * np.sum(soln**2, axis=0)
            - np.sum(np.log(np.diag(self._chol)))
            - 0.5 * self.dim * _LOG_2PI
        )
        return float(logp[0]) if single else logp

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self._chol.T

    def to_dict(self) -> dict:
        return {
            "kind": "gaussian",
            "dimension": self.dim,
            "mean": self.mean.tolist(),
            "covariance": self.cov.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Gaussian":
        return cls(np.array(data["mean"]), np.array(data["covariance"]))


@dataclass(frozen=True, eq=False)
class GMM:
    weights: np.ndarray
    components: List[Gaussian]

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.size != len(self.components) or not self.components:
            raise DensityError("GMM needs one positive weight per component")
        if np.any(weights <= 0.0):
            raise DensityError(f"GMM weights must be positive, got {weights}")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise DimensionMismatchError(f"GMM components disagree on dimension: {dims}")
        object.__setattr__(self, "weights", weights / weights.sum())
        object.__setattr__(self, "components", list(self.components))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def n_components(self) -> int:
        return len(self.components)

    def component_log_pdfs(self, x: np.ndarray) -> np.ndarray:
        """(n, K) matrix of log w_k + log N(x_n | μ_k, Σ_k)."""
        points = np.atleast_2d(np.asarray(x, dtype=float))
        return np.column_stack(
            [np.log(w) + c.log_pdf(points) for w, c in zip(self.weights, self.components)]
        )

    def log_pdf(self, x: np.ndarray) -> Union[float, np.ndarray]:
        single = np.asarray(x).ndim == 1
        logp = logsumexp(self.component_log_pdfs(x), axis=1)
        return float(logp[0]) if single else logp

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        labels = rng.choice(self.n_components, size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for k, component in enumerate(self.components):
            idx = np.flatnonzero(labels == k)
            if idx.size:
                out[idx] = component.sample(rng, idx.size)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "gmm",
            "dimension": self.dim,
            "weights": self.weights.tolist(),
            "components": [c.to_dict() for c in self.components],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GMM":
        return cls(
            np.array(data["weights"]),
            [Gaussian.from_dict(c) for c in data["components"]],
        )


Density = Union[Gaussian, GMM]


def density_from_dict(data: dict) -> Density:
    kind = data.get("kind")
    if kind == "gaussian":
        return Gaussian.from_dict(data)
    if kind == "gmm":
        return GMM.from_dict(data)
    raise DensityError(f"Unknown density kind '{kind}'")


def log_pdf(model: Density, x: np.ndarray) -> Union[float, np.ndarray]:
    return model.log_pdf(x)


@dataclass(frozen=True, eq=False)
class WeightedSamples:
    """Samples ξ_j with weights z_j held as log z_j."""

    samples: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        log_weights = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if samples.shape[0] != log_weights.size:
            raise DimensionMismatchError(
                f"{samples.shape[0]} samples but {log_weights.size} weights"
            )
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "log_weights", log_weights)

    @classmethod
    def from_weights(cls, samples: np.ndarray, weights: np.ndarray) -> "WeightedSamples":
        weights = np.asarray(weights, dtype=float)
        if np.any(weights < 0.0):
            raise DensityError("Sample weights must be non-negative")
        with np.errstate(divide="ignore"):
            return cls(samples, np.log(weights))

    @classmethod
    def uniform(cls, samples: np.ndarray) -> "WeightedSamples":
        samples = np.atleast_2d(samples)
        return cls(samples, np.zeros(samples.shape[0]))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def has_mass(self) -> bool:
        return bool(np.any(np.isfinite(self.log_weights)))

    @property
    def weights(self) -> np.ndarray:
        """Linear-domain z_j; may underflow for very small log weights."""
        return np.exp(self.log_weights)

    @property
    def normalized(self) -> np.ndarray:
        """z̄_j = z_j / Σ z_j, computed with a max shift."""
        if not self.has_mass:
            raise DegenerateWeightsError("All sample weights are zero")
        shifted = np.exp(self.log_weights - np.max(self.log_weights))
        return shifted / shifted.sum()

    def effective_sample_size(self) -> float:
        w = self.normalized
        return float(1.0 / np.sum(w**2))


def weighted_log_likelihood(model: Density, ws: WeightedSamples) -> float:
    """Σ_j z̄_j log p(ξ_j | v)."""
    w = ws.normalized
    mask = w > 0.0
    return float(np.sum(w[mask] * model.log_pdf(ws.samples[mask])))


def fit_gaussian_weighted(ws: WeightedSamples, floor: float = DEFAULT_FLOOR) -> Gaussian:
    """Closed-form weighted maximum likelihood, then regularize()."""
    w = ws.normalized
    X = ws.samples
    mean = w @ X
    diff = X - mean
    cov = (diff * w[:, None]).T @ diff
    return Gaussian(mean, regularize(cov, floor))


def kmeans_plus_plus_init(
    ws: WeightedSamples,
    n_components: int,
    floor: float = DEFAULT_FLOOR,
    seed: int = 0,
) -> GMM:
    """
    Weighted k-means++ seeding: means are picked from the samples with
    probability ∝ z̄_j·D², every component starts with the global weighted
    covariance and equal mixture weight.
    """
    rng = np.random.default_rng(seed)
    X = ws.samples
    w = ws.normalized
    global_fit = fit_gaussian_weighted(ws, floor)

    centers = [int(rng.choice(len(X), p=w))]
    for _ in range(1, n_components):
        d2 = np.min(
            np.stack([np.sum((X - X[c]) ** 2, axis=1) for c in centers]), axis=0
        )
        score = w * d2
        if score.sum() <= 0.0:
            # All weighted mass sits on chosen centers; pick the heaviest remaining sample
            remaining = [i for i in np.argsort(-w) if i not in centers]
            centers.append(int(remaining[0]) if remaining else centers[0])
            continue
        centers.append(int(rng.choice(len(X), p=score / score.sum())))

    components = [Gaussian(X[c].copy(), global_fit.cov) for c in centers]
    return GMM(np.full(n_components, 1.0 / n_components), components)


def fit_gmm_weighted(
    ws: WeightedSamples,
    n_components: int,
    init: Optional[GMM] = None,
    iters: int = EM_MAX_ITERATIONS,
    floor: float = DEFAULT_FLOOR,
    seed: int = 0,
    history: Optional[list] = None,
) -> GMM:
    """
    Weighted EM for a Gaussian mixture.

    E-step responsibilities are ∝ w_k N(ξ_j|μ_k, Σ_k); the M-step is the
    closed-form weighted fit with per-sample weights z̄_j·r_jk. Iteration stops
    after `iters` steps, when the weighted log-likelihood gains less than
    EM_TOLERANCE, or when a step would lower it (the previous model is kept).

    If `history` is given, the weighted log-likelihood of the initial model and
    of every accepted step is appended to it.
    """
    if n_components < 1:
        raise DensityError(f"Component count must be >= 1, got {n_components}")
    if len(ws) < n_components:
        raise DensityError(
            f"Need at least {n_components} samples for {n_components} components, got {len(ws)}"
        )

    X = ws.samples
    w = ws.normalized
    model = init if init is not None else kmeans_plus_plus_init(ws, n_components, floor, seed)
    if model.n_components != n_components:
        raise DensityError(
            f"Initial GMM has {model.n_components} components, expected {n_components}"
        )
    if model.dim != X.shape[1]:
        raise DimensionMismatchError(
            f"Initial GMM dimension {model.dim} does not match samples ({X.shape[1]})"
        )

    ll = weighted_log_likelihood(model, ws)
    if history is not None:
        history.append(ll)

    for iteration in range(iters):
        log_resp = model.component_log_pdfs(X)
        log_resp -= logsumexp(log_resp, axis=1, keepdims=True)
        resp = np.exp(log_resp)

        mixture_weights = np.empty(n_components)
        components = []
        for k in range(n_components):
            r_k = w * resp[:, k]
            mass = r_k.sum()
            if mass < 1e-12:
                anchor = int(np.argmax(w))
                logger.warning(
                    f"EM component {k} emptied at iteration {iteration}; "
                    f"re-seeding at sample {anchor}"
                )
                components.append(Gaussian(X[anchor].copy(), fit_gaussian_weighted(ws, floor).cov))
                mixture_weights[k] = 1.0 / n_components
                continue
            components.append(fit_gaussian_weighted(WeightedSamples.from_weights(X, r_k), floor))
            mixture_weights[k] = mass

        candidate = GMM(mixture_weights, components)
        new_ll = weighted_log_likelihood(candidate, ws)
        if new_ll < ll:
            logger.debug(
                f"EM step {iteration} would lower weighted log-likelihood "
                f"({ll:.6f} -> {new_ll:.6f}); keeping previous model"
            )
            break

        model = candidate
        if history is not None:
            history.append(new_ll)
        if new_ll - ll < EM_TOLERANCE:
            break
        ll = new_ll

    return model
