"""
Cross-entropy optimization of a trajectory-parameter distribution π(ξ|v)
toward an expert feature density p_d(x|a).

Each iteration draws M valid rollouts (invalid draws are rejected and
redrawn), weighs each by the summed expert likelihood of its feature trace,
refits v to the weighted samples and blends:

    v' = (1 - α) v + α v*

The blend is convex, so a step never leaves the segment between the current
and refitted distributions.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from tamp.constants import CEM_CONVERGENCE_TOLERANCE, REJECTION_BUDGET_FACTOR
from tamp.services.features import FeatureSchema, trace_batch
from tamp.services.simulator import HOLD, RobotState, Scene, SkillEffect, check_valid
from tamp.utils.density import (
    DEFAULT_FLOOR,
    GMM,
    Density,
    Gaussian,
    WeightedSamples,
    fit_gaussian_weighted,
    fit_gmm_weighted,
)
from tamp.utils.dmp import DmpConfig, Trajectory, TrajectoryBatch, rollout_batch

logger = logging.getLogger(__name__)

LOG_TINY = float(np.log(np.finfo(float).tiny))


class PlanningError(Exception):
    pass


class InvalidStartError(PlanningError):
    pass


class RejectionBudgetExceeded(PlanningError):
    def __init__(self, message: str, draws: int = 0, accepted: int = 0):
        super().__init__(message)
        self.draws = draws
        self.accepted = accepted


@dataclass(frozen=True)
class CemConfig:
    samples: int = 200
    step_size: float = 0.5
    max_iterations: int = 15
    tolerance: float = CEM_CONVERGENCE_TOLERANCE
    rejection_factor: int = REJECTION_BUDGET_FACTOR
    floor: float = DEFAULT_FLOOR
    noise: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.step_size < 1.0:
            raise ValueError(f"Step size must lie in (0, 1), got {self.step_size}")
        if self.samples < 2:
            raise ValueError(f"Need at least 2 samples per iteration, got {self.samples}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations cannot be negative")
        if self.rejection_factor < 1:
            raise ValueError("rejection_factor must be >= 1")

    @property
    def rejection_budget(self) -> int:
        return self.rejection_factor * self.samples


@dataclass(frozen=True, eq=False)
class StartSet:
    """Candidate start states with unnormalized log probabilities."""

    states: Tuple[RobotState, ...]
    log_weights: np.ndarray

    def __post_init__(self):
        log_weights = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if len(self.states) != log_weights.size:
            raise ValueError(f"{len(self.states)} start states but {log_weights.size} weights")
        if not self.states or not np.any(np.isfinite(log_weights)):
            raise InvalidStartError("Start set has no state with positive probability")
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "log_weights", log_weights)

    @classmethod
    def single(cls, state: RobotState) -> "StartSet":
        return cls((state,), np.zeros(1))

    def __len__(self) -> int:
        return len(self.states)

    @property
    def probabilities(self) -> np.ndarray:
        shifted = np.exp(self.log_weights - np.max(self.log_weights))
        return shifted / shifted.sum()

    def only_valid(self, scene: Scene) -> "StartSet":
        log_weights = self.log_weights.copy()
        for i, state in enumerate(self.states):
            verdict = check_valid(scene, state)
            if not verdict:
                logger.debug(f"Start state {i} is invalid ({verdict}), dropping it")
                log_weights[i] = -np.inf
        if not np.any(np.isfinite(log_weights)):
            raise InvalidStartError("Every start state is in collision or outside joint limits")
        return StartSet(self.states, log_weights)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Start indices ∝ p(S0). A single start consumes no randomness."""
        if len(self.states) == 1:
            return np.zeros(n, dtype=int)
        return rng.choice(len(self.states), size=n, p=self.probabilities)


@dataclass(frozen=True, eq=False)
class ActionContext:
    """Everything one grounded action needs for rollouts and weighting."""

    label: str
    schema: FeatureSchema
    expert: Density
    effect: SkillEffect = HOLD
    grasp_object: Optional[str] = None
    dmp: DmpConfig = field(default_factory=DmpConfig)
    duration: float = 2.0


@dataclass
class CemIterationReport:
    iteration: int
    mean_log_likelihood: float
    effective_sample_size: float
    rejections: int
    surrogate: Density
    best_log_weight: float = -np.inf

    def to_row(self) -> dict:
        return {
            "iteration": self.iteration,
            "mean_log_likelihood": self.mean_log_likelihood,
            "effective_sample_size": self.effective_sample_size,
            "rejections": self.rejections,
            "best_log_weight": self.best_log_weight,
        }


@dataclass
class CemResult:
    surrogate: Density
    best: Trajectory
    best_log_weight: float
    reports: List[CemIterationReport]


def sample_valid(
    v: Density,
    count: int,
    starts: Union[RobotState, StartSet],
    scene: Scene,
    ctx: ActionContext,
    cfg: CemConfig,
    rng: np.random.Generator,
) -> Tuple[TrajectoryBatch, int]:
    """
    Exactly `count` valid rollouts of parameters drawn from v, and the number of
    rejected draws. Raises RejectionBudgetExceeded after
    cfg.rejection_factor * count draws.
    """
    if count < 1:
        raise ValueError("Sample count must be >= 1")
    if isinstance(starts, RobotState):
        starts = StartSet.single(starts)
    starts = starts.only_valid(scene)

    budget = cfg.rejection_factor * count
    accepted: List[TrajectoryBatch] = []
    n_accepted = 0
    draws = 0
    while n_accepted < count:
        if draws >= budget:
            raise RejectionBudgetExceeded(
                f"'{ctx.label}': only {n_accepted} of {count} valid trajectories after {draws} draws",
                draws,
                n_accepted,
            )
        size = min(count - n_accepted, budget - draws)
        vectors = v.sample(rng, size)
        index = starts.draw(rng, size)
        batch = rollout_batch(
            vectors,
            [starts.states[i] for i in index],
            scene,
            ctx.dmp,
            duration=ctx.duration,
            effect=ctx.effect,
            grasp_object=ctx.grasp_object,
            noise=cfg.noise,
            rng=rng,
            start_index=index,
        )
        draws += size
        keep = np.flatnonzero(batch.valid)
        if keep.size:
            accepted.append(batch.select(keep))
            n_accepted += keep.size

    rejections = draws - n_accepted
    if rejections:
        logger.debug(f"'{ctx.label}': {rejections} rejected draws for {count} samples")
    return TrajectoryBatch.concatenate(accepted), rejections


def log_likelihoods(expert: Density, features: np.ndarray) -> np.ndarray:
    """log p_d(x_{i,j}) for a (n, T, d) feature array, shape (n, T)."""
    n, steps, dim = features.shape
    return np.asarray(expert.log_pdf(features.reshape(n * steps, dim))).reshape(n, steps)


def weigh(
    log_p: np.ndarray, samples: np.ndarray, log_values: Optional[np.ndarray] = None
) -> WeightedSamples:
    """
    log z_j = log Σ_i p_d(x_{i,j}) (+ log V_j when downstream values are given).

    If every weight is zero the iteration is degenerate and the samples are
    weighted uniformly.
    """
    log_z = logsumexp(np.atleast_2d(log_p), axis=1)
    if log_values is not None:
        log_z = log_z + np.asarray(log_values, dtype=float)
    if not np.any(log_z > -np.inf):
        logger.warning("All trajectory weights underflowed; falling back to uniform weights")
        return WeightedSamples.uniform(samples)
    return WeightedSamples(samples, log_z)


def blend(v: Density, target: Density, alpha: float) -> Density:
    """(1 - α) v + α v* on means, covariances and (for mixtures) component weights."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"Blend factor must lie in [0, 1], got {alpha}")
    if isinstance(v, Gaussian) and isinstance(target, Gaussian):
        return Gaussian((1 - alpha) * v.mean + alpha * target.mean, (1 - alpha) * v.cov + alpha * target.cov)
    if isinstance(v, GMM) and isinstance(target, GMM):
        if v.n_components != target.n_components:
            raise ValueError("Cannot blend mixtures with different component counts")
        return GMM(
            (1 - alpha) * v.weights + alpha * target.weights,
            [blend(a, b, alpha) for a, b in zip(v.components, target.components)],
        )
    raise TypeError(f"Cannot blend {type(v).__name__} with {type(target).__name__}")


def update(v: Density, ws: WeightedSamples, alpha: float, floor: float = DEFAULT_FLOOR) -> Density:
    if isinstance(v, GMM):
        target = fit_gmm_weighted(ws, v.n_components, init=v, floor=floor)
    else:
        target = fit_gaussian_weighted(ws, floor)
    return blend(v, target, alpha)


def mean_log_likelihood(log_p: np.ndarray) -> float:
    """Average per-step expert log-likelihood over a set of traces."""
    finite = log_p[np.isfinite(log_p)]
    return float(finite.mean()) if finite.size else -np.inf


def converged(previous: Optional[float], current: float, tolerance: float) -> bool:
    if previous is None or not np.isfinite(previous) or not np.isfinite(current):
        return False
    return abs(current - previous) <= tolerance * abs(previous)


def evaluate(batch: TrajectoryBatch, scene: Scene, ctx: ActionContext) -> np.ndarray:
    return log_likelihoods(ctx.expert, trace_batch(ctx.schema, batch, scene))


def optimize(
    ctx: ActionContext,
    v0: Density,
    start: Union[RobotState, StartSet],
    scene: Scene,
    cfg: CemConfig,
    rng: np.random.Generator,
) -> CemResult:
    v = v0
    reports: List[CemIterationReport] = []
    best: Optional[Trajectory] = None
    best_log_weight = -np.inf
    previous: Optional[float] = None

    for iteration in range(max(1, cfg.max_iterations)):
        batch, rejections = sample_valid(v, cfg.samples, start, scene, ctx, cfg, rng)
        log_p = evaluate(batch, scene, ctx)
        ws = weigh(log_p, batch.vectors)

        j = int(np.argmax(ws.log_weights))
        if best is None or ws.log_weights[j] > best_log_weight:
            best, best_log_weight = batch.trajectory(j), float(ws.log_weights[j])

        if cfg.max_iterations > 0:
            v = update(v, ws, cfg.step_size, cfg.floor)
        mean_ll = mean_log_likelihood(log_p)
        reports.append(
            CemIterationReport(
                iteration, mean_ll, ws.effective_sample_size(), rejections, v, float(ws.log_weights[j])
            )
        )
        logger.debug(
            f"'{ctx.label}' iteration {iteration}: mean log-likelihood {mean_ll:.4f}, "
            f"ESS {reports[-1].effective_sample_size:.1f}, {rejections} rejections"
        )
        if converged(previous, mean_ll, cfg.tolerance):
            break
        previous = mean_ll

    if best_log_weight < LOG_TINY:
        logger.warning(f"'{ctx.label}': best trajectory has zero expert probability")
    return CemResult(v, best, best_log_weight, reports)
