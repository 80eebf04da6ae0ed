"""
Expert models learned from demonstrations.

An ExpertModel holds, for every skill (PDDL action schema), a Gaussian mixture
p_d(x|a) over the feature vectors seen while that skill was demonstrated, plus
the action prior p_d(a|w) counted from which action the demonstrator chose in
each predicate state. The training pool is stored with the model so that
augmentation can refit without the original demonstration files.

Model files are JSON:

    {
      "settings": {"n_components": 3, "floor": 1e-6, "seed": 0, "dmp": {...}},
      "skills": {"approach": {"schema": {...}, "density": <gmm>, "features": [[...]],
                              "weights": [[...]], "terminals": [[x, y, theta]], ...}},
      "prior": {"floor": 0.001, "counts": {...}, "overrides": {...}},
      "provenance": [{"event": "fit", "demos": [...]}, {"event": "augment", ...}]
    }
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import json5
import numpy as np

from tamp.constants import V0_GOAL_ANGLE_STD, V0_GOAL_POSITION_STD, V0_WEIGHT_STD
from tamp.utils.cem import ActionContext
from tamp.utils.density import (
    DEFAULT_FLOOR,
    Density,
    Gaussian,
    WeightedSamples,
    density_from_dict,
    fit_gmm_weighted,
)
from tamp.utils.dmp import DmpConfig, fit_weights
from tamp.utils.geometry import PlanarPose
from tamp.utils.treeplan import ActionPrior, fit_action_prior

from .demonstrations import Demonstration, DemonstrationError, DemoSegment
from .features import FeatureSchema, effect_from_action, schema_from_action
from .grounder import GroundedAction
from .pddl_parser import Domain
from .simulator import RobotState, Scene

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class SkillModel:
    skill: str
    schema: FeatureSchema
    density: Density
    features: np.ndarray
    weights: np.ndarray
    terminals: np.ndarray
    sources: List[str] = field(default_factory=list)
    log_likelihood: float = float("nan")

    @property
    def weight_mean(self) -> np.ndarray:
        return self.weights.mean(axis=0)

    @property
    def terminal_mean(self) -> PlanarPose:
        """Mean terminal pose of the manipulation frame in the reference object's frame."""
        x, y = self.terminals[:, :2].mean(axis=0)
        theta = np.arctan2(np.sin(self.terminals[:, 2]).mean(), np.cos(self.terminals[:, 2]).mean())
        return PlanarPose(x, y, theta)

    def to_dict(self) -> dict:
        return {
            "skill": self.skill,
            "schema": self.schema.to_dict(),
            "density": self.density.to_dict(),
            "features": self.features.tolist(),
            "weights": self.weights.tolist(),
            "terminals": self.terminals.tolist(),
            "sources": list(self.sources),
            "log_likelihood": self.log_likelihood,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SkillModel":
        return cls(
            skill=data["skill"],
            schema=FeatureSchema.from_dict(data["schema"]),
            density=density_from_dict(data["density"]),
            features=np.asarray(data["features"], dtype=float),
            weights=np.asarray(data["weights"], dtype=float),
            terminals=np.asarray(data["terminals"], dtype=float),
            sources=list(data.get("sources", [])),
            log_likelihood=float(data.get("log_likelihood", float("nan"))),
        )


@dataclass(eq=False)
class ExpertModel:
    skills: Dict[str, SkillModel]
    prior: ActionPrior
    n_components: int = 3
    floor: float = DEFAULT_FLOOR
    seed: int = 0
    dmp: DmpConfig = field(default_factory=DmpConfig)
    provenance: List[dict] = field(default_factory=list)

    def skill(self, name: str) -> SkillModel:
        try:
            return self.skills[name]
        except KeyError:
            raise DemonstrationError(f"Model has no data for skill '{name}'") from None

    def covers(self, skills: Sequence[str]) -> List[str]:
        """Skills from `skills` the model cannot serve."""
        return sorted({s for s in skills if s not in self.skills})

    def to_dict(self) -> dict:
        return {
            "settings": {
                "n_components": self.n_components,
                "floor": self.floor,
                "seed": self.seed,
                "dmp": {
                    "n_basis": self.dmp.n_basis,
                    "spring": self.dmp.spring,
                    "dt": self.dmp.dt,
                    "phase_decay": self.dmp.phase_decay,
                },
            },
            "skills": {name: s.to_dict() for name, s in sorted(self.skills.items())},
            "prior": self.prior.to_dict(),
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExpertModel":
        try:
            settings = data.get("settings", {})
            return cls(
                skills={k: SkillModel.from_dict(v) for k, v in data["skills"].items()},
                prior=ActionPrior.from_dict(data.get("prior", {})),
                n_components=int(settings.get("n_components", 3)),
                floor=float(settings.get("floor", DEFAULT_FLOOR)),
                seed=int(settings.get("seed", 0)),
                dmp=DmpConfig(**settings.get("dmp", {})),
                provenance=list(data.get("provenance", [])),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DemonstrationError(f"Malformed expert model: {e}") from e


def save_model(model: ExpertModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.to_json(), encoding="utf-8")
    return path


def load_model(path) -> ExpertModel:
    path = Path(path)
    try:
        return ExpertModel.from_dict(json5.loads(path.read_text(encoding="utf-8")))
    except OSError as e:
        raise DemonstrationError(f"Cannot read model {path}: {e}") from e
    except ValueError as e:
        raise DemonstrationError(f"Model {path} is not valid JSON: {e}") from e


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def _terminal_pose(segment: DemoSegment) -> np.ndarray:
    trajectory = segment.trajectory
    reference = segment.schema.objects[0]
    final = PlanarPose.from_array(trajectory.manipulation_poses[-1])
    if reference == trajectory.attached_name:
        return np.zeros(3)
    return PlanarPose.from_array(trajectory.object_poses[reference]).relative(final).as_array()


def _fit_density(skill: str, features: np.ndarray, n_components: int, floor: float, seed: int) -> Density:
    k = min(n_components, len(features))
    if k < n_components:
        logger.warning(f"Skill '{skill}' has {len(features)} feature rows; fitting {k} components")
    return fit_gmm_weighted(WeightedSamples.uniform(features), k, floor=floor, seed=seed)


def _skill_from_pool(
    skill: str,
    schema: FeatureSchema,
    features: np.ndarray,
    weights: np.ndarray,
    terminals: np.ndarray,
    sources: List[str],
    n_components: int,
    floor: float,
    seed: int,
) -> SkillModel:
    density = _fit_density(skill, features, n_components, floor, seed)
    ll = float(np.mean(density.log_pdf(features)))
    logger.info(
        f"Fitted '{skill}': {len(sources)} segments, {len(features)} rows, "
        f"dimension {schema.dimension}, mean log-likelihood {ll:.3f}"
    )
    return SkillModel(skill, schema, density, features, weights, terminals, sources, ll)


def _pool(segments: Sequence[DemoSegment], dmp: DmpConfig):
    features = np.vstack([s.features.values for s in segments])
    weights = np.array([fit_weights(s.trajectory.q, s.trajectory.times, dmp).ravel() for s in segments])
    terminals = np.array([_terminal_pose(s) for s in segments])
    return features, weights, terminals


def _segments_by_skill(demos: Sequence[Demonstration]) -> Dict[str, List[DemoSegment]]:
    grouped: Dict[str, List[DemoSegment]] = {}
    for demo in demos:
        for segment in demo.segments:
            grouped.setdefault(segment.skill, []).append(segment)
    return grouped


def _segment_sources(demos: Sequence[Demonstration], skill: str) -> List[str]:
    return [d.id for d in demos for s in d.segments if s.skill == skill]


def fit_expert(
    demos: Sequence[Demonstration],
    n_components: int = 3,
    floor: float = DEFAULT_FLOOR,
    seed: int = 0,
    dmp: Optional[DmpConfig] = None,
    prior_floor: float = 1e-3,
    prior_overrides: Optional[Dict[str, Dict[str, float]]] = None,
    initial_state_key: Optional[str] = None,
) -> ExpertModel:
    """
    Pool feature traces per skill and fit a GMM to each; count the action
    prior from segment labels. An override keyed "initial" applies to
    `initial_state_key`.
    """
    if not demos:
        raise DemonstrationError("Cannot fit an expert model without demonstrations")
    dmp = dmp or DmpConfig()
    overrides = dict(prior_overrides or {})
    if "initial" in overrides:
        if initial_state_key is None:
            raise DemonstrationError("Prior override for 'initial' needs the initial state of the task")
        overrides[initial_state_key] = overrides.pop("initial")

    skills = {}
    for skill, segments in sorted(_segments_by_skill(demos).items()):
        features, weights, terminals = _pool(segments, dmp)
        skills[skill] = _skill_from_pool(
            skill,
            replace(segments[0].schema, binding=()),
            features,
            weights,
            terminals,
            _segment_sources(demos, skill),
            n_components,
            floor,
            seed,
        )

    prior = fit_action_prior(
        ((s.state_before, s.label) for d in demos for s in d.segments), prior_floor, overrides
    )
    return ExpertModel(
        skills,
        prior,
        n_components,
        floor,
        seed,
        dmp,
        [{"event": "fit", "demos": [d.id for d in demos]}],
    )


def augment(
    model: ExpertModel, executions: Sequence[Demonstration], selection: Sequence[str]
) -> ExpertModel:
    """Add selected successful executions to the training pool and refit."""
    if not selection:
        return model
    by_id = {e.id: e for e in executions}
    unknown = [s for s in selection if s not in by_id]
    if unknown:
        raise DemonstrationError(f"Unknown execution id(s): {', '.join(unknown)}")
    chosen = [by_id[s] for s in selection]

    skills = dict(model.skills)
    for skill, segments in sorted(_segments_by_skill(chosen).items()):
        features, weights, terminals = _pool(segments, model.dmp)
        current = skills.get(skill)
        if current is not None:
            features = np.vstack([current.features, features])
            weights = np.vstack([current.weights, weights])
            terminals = np.vstack([current.terminals, terminals])
            sources = current.sources + _segment_sources(chosen, skill)
            schema = current.schema
        else:
            sources = _segment_sources(chosen, skill)
            schema = replace(segments[0].schema, binding=())
        skills[skill] = _skill_from_pool(
            skill, schema, features, weights, terminals, sources, model.n_components, model.floor, model.seed
        )

    prior = ActionPrior.from_dict(model.prior.to_dict())
    for execution in chosen:
        for segment in execution.segments:
            prior.observe(segment.state_before, segment.label)

    rounds = sum(1 for p in model.provenance if p.get("event") == "augment")
    provenance = model.provenance + [{"event": "augment", "round": rounds + 1, "executions": list(selection)}]
    logger.info(f"Augmented model with {len(chosen)} execution(s), round {rounds + 1}")
    return replace(model, skills=skills, prior=prior, provenance=provenance)


# ---------------------------------------------------------------------------
# Binding to a planning problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SkillSettings:
    frame_types: tuple = ("face",)
    holding_predicate: str = "holding"
    gripper_predicate: str = "hand-occupied"
    duration: float = 2.0
    dmp: Optional[DmpConfig] = None
    weight_std: float = V0_WEIGHT_STD
    goal_position_std: float = V0_GOAL_POSITION_STD
    goal_angle_std: float = V0_GOAL_ANGLE_STD


class BoundModel:
    """An expert model bound to one domain and scene, as the tree planner consumes it."""

    def __init__(self, model: ExpertModel, domain: Domain, scene: Scene, settings: Optional[SkillSettings] = None):
        self.model = model
        self.domain = domain
        self.scene = scene
        self.settings = settings or SkillSettings()
        self.dmp = self.settings.dmp or model.dmp
        if self.dmp.n_basis != model.dmp.n_basis:
            raise DemonstrationError(
                f"Model was learned with {model.dmp.n_basis} basis functions per joint, run uses {self.dmp.n_basis}"
            )

    def schema(self, edge: GroundedAction) -> FeatureSchema:
        action = self.domain.action(edge.schema)
        binding = edge.binding(self.domain)
        schema = schema_from_action(action, self.settings.frame_types, self.settings.holding_predicate)
        stored = self.model.skill(edge.schema).schema
        if stored.roles != schema.roles:
            raise DemonstrationError(
                f"Skill '{edge.schema}' was learned with roles {stored.roles}, domain declares {schema.roles}"
            )
        return schema.bind(binding)

    def context(self, edge: GroundedAction) -> ActionContext:
        action = self.domain.action(edge.schema)
        binding = edge.binding(self.domain)
        effect = effect_from_action(action, self.settings.gripper_predicate, self.settings.holding_predicate)
        return ActionContext(
            label=edge.label,
            schema=self.schema(edge),
            expert=self.model.skill(edge.schema).density,
            effect=effect,
            grasp_object=binding.get(effect.grasp_role) if effect.grasp_role else None,
            dmp=self.dmp,
            duration=self.settings.duration,
        )

    def goal(self, edge: GroundedAction, start: RobotState) -> PlanarPose:
        """Nominal end-effector goal for an action started from `start`."""
        schema = self.schema(edge)
        reference = schema.objects[0]
        pose = start.object_pose(self.scene, reference)
        if schema.frame_name is not None:
            return self.scene.object(reference).frame_pose(schema.frame_name, pose)
        manipulation = pose.compose(self.model.skill(edge.schema).terminal_mean)
        if start.attached is not None:
            return manipulation.compose(start.attached.offset.inverse())
        return manipulation

    def initial_surrogate(self, edge: GroundedAction, start: RobotState) -> Density:
        skill = self.model.skill(edge.schema)
        goal = self.goal(edge, start)
        mean = np.concatenate([skill.weight_mean, goal.as_array()])
        s = self.settings
        variances = np.concatenate(
            [
                np.full(skill.weight_mean.size, s.weight_std**2),
                [s.goal_position_std**2, s.goal_position_std**2, s.goal_angle_std**2],
            ]
        )
        return Gaussian(mean, np.diag(variances))

    def prior(self, state_key: str, labels: Sequence[str]) -> Dict[str, float]:
        return self.model.prior.distribution(state_key, labels)
