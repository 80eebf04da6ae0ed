"""
A small reaching setup shared by the planner tests: a three-link arm, one
marker object well out of the way, and an expert fitted on a single reference
reach.
"""
from typing import Dict, Sequence

import numpy as np
from django.conf import settings

from tamp.services.features import FeatureSchema, trace_batch
from tamp.services.grounder import GroundedAction, ground
from tamp.services.pddl_parser import parse_domain, parse_problem
from tamp.services.simulator import ArmModel, RobotState, Scene, SceneObject, forward_kinematics
from tamp.utils.cem import ActionContext
from tamp.utils.density import Density, Gaussian, WeightedSamples, fit_gaussian_weighted
from tamp.utils.dmp import DmpConfig, TrajectoryParams, params_as_vector, rollout_batch
from tamp.utils.geometry import PlanarPose

FIXTURES = settings.BASE_DIR / "tamp" / "tests" / "fixtures"

ARM = ArmModel()
DMP = DmpConfig()
SCENE = Scene(
    name="reach",
    arm=ARM,
    objects=(SceneObject("node1", PlanarPose(-0.3, 0.5, 0.0), "node", 0.03),),
    home=(0.0, 0.2, 0.0),
)
SCHEMA = FeatureSchema("align", ("?n",)).bind({"?n": "node1"})
REFERENCE = (0.4, 0.5, 0.3)


def goal_of(q: Sequence[float]) -> PlanarPose:
    pose, _ = forward_kinematics(ARM, q)
    return pose


def mean_vector(q: Sequence[float]) -> np.ndarray:
    return params_as_vector(TrajectoryParams(np.zeros((ARM.n_joints, DMP.n_basis)), goal_of(q)))


def surrogate(q: Sequence[float], weight_std: float = 0.5, position_std: float = 0.01) -> Gaussian:
    std = np.r_[np.full(ARM.n_joints * DMP.n_basis, weight_std), position_std, position_std, 2 * position_std]
    return Gaussian(mean_vector(q), np.diag(std**2))


def reference_expert() -> Gaussian:
    batch = rollout_batch(mean_vector(REFERENCE)[None], [SCENE.start_state()], SCENE, DMP)
    features = trace_batch(SCHEMA, batch, SCENE)[0]
    return fit_gaussian_weighted(WeightedSamples.uniform(features), floor=1e-3)


def context(label: str = "reach", expert: Density = None) -> ActionContext:
    return ActionContext(label, SCHEMA, expert or reference_expert(), dmp=DMP)


def tiny_task(goal: str = None):
    domain = parse_domain((FIXTURES / "tiny_domain.pddl").read_text())
    text = (FIXTURES / "tiny_problem.pddl").read_text()
    if goal is not None:
        text = text.replace("(:goal (and (gone a) (gone b)))", goal)
    return domain, ground(domain, parse_problem(text, domain))


def tiny_graph(goal: str = None):
    return tiny_task(goal)[1]


class ReachLibrary:
    """Every action reaches for the same reference pose from wherever it starts."""

    def __init__(self, v0: Density = None, expert: Density = None):
        self.expert = expert or reference_expert()
        self.v0 = v0 or surrogate(REFERENCE)
        self.surrogate_calls = 0

    def context(self, edge: GroundedAction) -> ActionContext:
        return context(edge.label, self.expert)

    def initial_surrogate(self, edge: GroundedAction, start: RobotState) -> Density:
        self.surrogate_calls += 1
        return self.v0

    def prior(self, state_key: str, labels: Sequence[str]) -> Dict[str, float]:
        return {label: 1.0 / len(labels) for label in labels}
