"""
Scripted demonstrations and their file format.

The demonstrator stands in for a human teleoperator: for each grounded action
of a task plan it picks an end-effector target from the scene (a grasp face,
a pose in front of a node, the mate pose), solves IK and moves there along a
smooth joint-space spline, optionally through a jittered via point. Every
segment is validated against the scene and labeled with the predicate states
it connects.

One demonstration is stored per JSON file:

    {
      "id": "demo-000",
      "source": "scripted",
      "scene": { ...scene JSON... },
      "segments": [
        {"skill": "approach", "label": "approach link1 front", "args": [...],
         "state_before": "...", "state_after": "...",
         "schema": {...}, "trajectory": {...}, "features": {"names": [...], "values": [[...]]}}
      ]
    }
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import json5
import numpy as np
from scipy.interpolate import CubicSpline

from tamp.constants import ALIGN_OFFSET, GRASP_STANDOFF, MATE_OFFSET
from tamp.utils.dmp import DmpConfig, Trajectory, assemble_batch
from tamp.utils.geometry import PlanarPose

from .features import FeatureSchema, FeatureTrace, effect_from_action, schema_from_action, trace
from .grounder import GroundedAction, TaskGraph, follow
from .pddl_parser import Domain, PddlError
from .scene_io import scene_from_dict, scene_to_dict
from .simulator import (
    InverseKinematicsError,
    RobotState,
    Scene,
    SimulationError,
    forward_kinematics,
    inverse_kinematics,
)

logger = logging.getLogger(__name__)

DEFAULT_FACES = ("front", "left", "right")
DEFAULT_NODES = ("node1", "node2")


class DemonstrationError(Exception):
    pass


@dataclass(eq=False)
class DemoSegment:
    skill: str
    label: str
    args: tuple
    state_before: str
    state_after: str
    schema: FeatureSchema
    trajectory: Trajectory
    features: FeatureTrace

    def to_dict(self) -> dict:
        return {
            "skill": self.skill,
            "label": self.label,
            "args": list(self.args),
            "state_before": self.state_before,
            "state_after": self.state_after,
            "schema": {**self.schema.to_dict(), "binding": self.schema.bound},
            "trajectory": self.trajectory.to_dict(),
            "features": {"names": self.features.names, "values": self.features.values.tolist()},
        }

    @classmethod
    def from_dict(cls, data: dict, scene: Scene) -> "DemoSegment":
        schema = FeatureSchema.from_dict(data["schema"]).bind(data["schema"].get("binding", {}))
        trajectory = Trajectory.from_dict(data["trajectory"], scene)
        features = data.get("features")
        return cls(
            skill=data["skill"],
            label=data["label"],
            args=tuple(data.get("args", ())),
            state_before=data["state_before"],
            state_after=data["state_after"],
            schema=schema,
            trajectory=trajectory,
            features=(
                FeatureTrace(features["names"], trajectory.times, features["values"])
                if features
                else trace(schema, trajectory, scene)
            ),
        )


@dataclass(eq=False)
class Demonstration:
    id: str
    scene: Scene
    segments: List[DemoSegment] = field(default_factory=list)
    source: str = "scripted"

    @property
    def labels(self) -> List[str]:
        return [s.label for s in self.segments]

    def check(self, tolerance: float = 1e-9):
        """Segments must chain and stored features must match their trajectories."""
        for prev, nxt in zip(self.segments, self.segments[1:]):
            if prev.state_after != nxt.state_before:
                raise DemonstrationError(
                    f"{self.id}: '{nxt.label}' starts in [{nxt.state_before}], "
                    f"but '{prev.label}' ended in [{prev.state_after}]"
                )
        for segment in self.segments:
            recomputed = trace(segment.schema, segment.trajectory, self.scene)
            if recomputed.values.shape != segment.features.values.shape or not np.allclose(
                recomputed.values, segment.features.values, rtol=0.0, atol=tolerance
            ):
                raise DemonstrationError(f"{self.id}: stored features of '{segment.label}' are stale")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source": self.source,
            "scene": scene_to_dict(self.scene),
            "segments": [s.to_dict() for s in self.segments],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Demonstration":
        try:
            scene = scene_from_dict(data["scene"])
            segments = [DemoSegment.from_dict(s, scene) for s in data.get("segments", [])]
            return cls(data["id"], scene, segments, data.get("source", "scripted"))
        except (KeyError, TypeError, ValueError) as e:
            raise DemonstrationError(f"Malformed demonstration: {e}") from e


def save_demonstration(demo: Demonstration, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{demo.id}.json"
    path.write_text(json.dumps(demo.to_dict()) + "\n", encoding="utf-8")
    return path


def load_demonstration(path) -> Demonstration:
    path = Path(path)
    try:
        data = json5.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise DemonstrationError(f"Cannot read demonstration {path}: {e}") from e
    except ValueError as e:
        raise DemonstrationError(f"Demonstration {path} is not valid JSON: {e}") from e
    return Demonstration.from_dict(data)


def load_demonstrations(directory) -> List[Demonstration]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DemonstrationError(f"Demonstration directory {directory} does not exist")
    demos = [load_demonstration(p) for p in sorted(directory.glob("*.json"))]
    if not demos:
        raise DemonstrationError(f"No demonstrations found in {directory}")
    logger.info(f"Loaded {len(demos)} demonstrations from {directory}")
    return demos


# ---------------------------------------------------------------------------
# Scripted demonstrator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Waypoints:
    target: PlanarPose
    via: Optional[PlanarPose] = None


def _held_target(state: RobotState, object_target: PlanarPose) -> PlanarPose:
    """End-effector pose that puts the held object at `object_target`."""
    if state.attached is None:
        raise DemonstrationError("Action needs a held object but the gripper is empty")
    return object_target.compose(state.attached.offset.inverse())


def _approach(scene, state, binding, rng, noise) -> List[Waypoints]:
    """
    Routes to a grasp face, tried in order: back along the approach axis, then
    from either side of it, then straight at the face.
    """
    link = scene.object(binding["?l"])
    target = link.frame_pose(binding["?f"], state.object_pose(scene, link.name))
    side = GRASP_STANDOFF * np.sqrt(0.5)
    offsets = [(-GRASP_STANDOFF, 0.0), (-side, -side), (-side, side)]
    routes = []
    for dx, dy in offsets:
        via = target.compose(PlanarPose(dx, dy, 0.0))
        if noise > 0:
            via = PlanarPose(via.x + rng.normal(0, noise), via.y + rng.normal(0, noise), via.theta)
        routes.append(Waypoints(target, via))
    routes.append(Waypoints(target))
    return routes


def _stay(scene, state, binding, rng, noise) -> List[Waypoints]:
    ee, _ = forward_kinematics(scene.arm, state.q)
    return [Waypoints(ee)]


def _align(scene, state, binding, rng, noise) -> List[Waypoints]:
    node = scene.object(binding["?n"])
    link_target = state.object_pose(scene, node.name).compose(PlanarPose(-(MATE_OFFSET + ALIGN_OFFSET), 0.0, 0.0))
    if noise > 0:
        jitter = 0.25 * noise
        link_target = PlanarPose(
            link_target.x + rng.normal(0, jitter), link_target.y + rng.normal(0, jitter), link_target.theta
        )
    return [Waypoints(_held_target(state, link_target))]


def _place(scene, state, binding, rng, noise) -> List[Waypoints]:
    node = scene.object(binding["?n"])
    mate = node.frame_pose("mate", state.object_pose(scene, node.name))
    return [Waypoints(_held_target(state, mate))]


Script = Callable[[Scene, RobotState, Dict[str, str], np.random.Generator, float], List[Waypoints]]

SCRIPTS: Dict[str, Script] = {
    "approach": _approach,
    "grasp": _stay,
    "align": _align,
    "place": _place,
    "release": _stay,
}


def joint_path(
    scene: Scene, start: RobotState, waypoints: Waypoints, times: np.ndarray
) -> np.ndarray:
    """Clamped cubic spline in joint space from the start through the waypoints."""
    q0 = start.q_array
    try:
        knots = [q0]
        if waypoints.via is not None:
            knots.append(inverse_kinematics(scene.arm, waypoints.via, q0))
        knots.append(inverse_kinematics(scene.arm, waypoints.target, knots[-1]))
    except InverseKinematicsError as e:
        raise DemonstrationError(f"Waypoint is not reachable: {e}") from e
    knot_times = np.linspace(times[0], times[-1], len(knots))
    return CubicSpline(knot_times, np.array(knots), bc_type="clamped", axis=0)(times)


def script_segment(
    scene: Scene,
    domain: Domain,
    edge: GroundedAction,
    state: RobotState,
    rng: np.random.Generator,
    noise: float = 0.0,
    dmp: Optional[DmpConfig] = None,
    duration: float = 2.0,
    holding_predicate: str = "holding",
    gripper_predicate: str = "hand-occupied",
) -> Trajectory:
    dmp = dmp or DmpConfig()
    script = SCRIPTS.get(edge.schema)
    if script is None:
        raise DemonstrationError(f"No scripted motion for skill '{edge.schema}'")
    action = domain.action(edge.schema)
    binding = edge.binding(domain)
    effect = effect_from_action(action, gripper_predicate, holding_predicate)
    grasp_object = binding.get(effect.grasp_role) if effect.grasp_role else None

    times = np.arange(dmp.steps(duration) + 1) * dmp.dt
    failures = []
    for waypoints in script(scene, state, binding, rng, noise):
        try:
            q = joint_path(scene, state, waypoints, times)
        except DemonstrationError as e:
            failures.append(str(e))
            continue
        dq = np.gradient(q, times, axis=0)
        dq[0], dq[-1] = 0.0, 0.0
        batch = assemble_batch(times, q[None], dq[None], dq[None].copy(), [state], scene, effect, grasp_object)
        trajectory = batch.trajectory(0)
        if trajectory.valid:
            if failures:
                logger.debug(f"Scripted '{edge.label}' took route {len(failures) + 1} after: {'; '.join(failures)}")
            return trajectory
        failures.append(str(trajectory.verdict))
    raise DemonstrationError(
        f"Scripted '{edge.label}' in scene {scene.name} is infeasible: {'; '.join(dict.fromkeys(failures))}"
    )


def script_demo(
    scene: Scene,
    domain: Domain,
    graph: TaskGraph,
    labels: Sequence[str],
    rng: np.random.Generator,
    noise: float = 0.0,
    demo_id: str = "demo",
    dmp: Optional[DmpConfig] = None,
    duration: float = 2.0,
    frame_types: Sequence[str] = ("face",),
    holding_predicate: str = "holding",
    gripper_predicate: str = "hand-occupied",
) -> Demonstration:
    """Execute a labeled task plan with the scripted demonstrator."""
    try:
        edges = follow(graph, labels)
    except PddlError as e:
        raise DemonstrationError(f"Script does not follow the task graph: {e}") from e

    state = scene.start_state()
    segments = []
    for edge in edges:
        trajectory = script_segment(
            scene,
            domain,
            edge,
            state,
            rng,
            noise,
            dmp,
            duration,
            holding_predicate,
            gripper_predicate,
        )
        schema = schema_from_action(domain.action(edge.schema), frame_types, holding_predicate).bind(
            edge.binding(domain)
        )
        segments.append(
            DemoSegment(
                skill=edge.skill,
                label=edge.label,
                args=edge.args,
                state_before=graph.states[edge.source].key,
                state_after=graph.states[edge.target].key,
                schema=schema,
                trajectory=trajectory,
                features=trace(schema, trajectory, scene),
            )
        )
        state = trajectory.final_state
    logger.debug(f"Scripted {demo_id}: {', '.join(labels)}")
    return Demonstration(demo_id, scene, segments)


def assembly_script(face: str, node: str, link: str = "link1") -> List[str]:
    return [
        f"approach {link} {face}",
        f"grasp {link} {face}",
        f"align {link} {node}",
        f"place {link} {node}",
        f"release {link} {node}",
    ]


def demonstration_set(
    scenes: Sequence[Scene],
    domain: Domain,
    graph: TaskGraph,
    seed: int = 0,
    noise: float = 0.0,
    faces: Sequence[str] = DEFAULT_FACES,
    nodes: Sequence[str] = DEFAULT_NODES,
    **kwargs,
) -> List[Demonstration]:
    """Every (face, node) script in every scene, numbered in that order."""
    rng = np.random.default_rng(seed)
    demos = []
    for scene in scenes:
        for face in faces:
            for node in nodes:
                demo_id = f"demo-{len(demos):03d}"
                try:
                    demos.append(
                        script_demo(
                            scene, domain, graph, assembly_script(face, node), rng, noise, demo_id, **kwargs
                        )
                    )
                except (DemonstrationError, SimulationError) as e:
                    logger.warning(f"Skipping {face}/{node} demonstration in {scene.name}: {e}")
    return demos


def demonstration_from_execution(
    execution_id: str,
    scene: Scene,
    domain: Domain,
    graph: TaskGraph,
    actions: Sequence[GroundedAction],
    trajectories: Sequence[Trajectory],
    frame_types: Sequence[str] = ("face",),
    holding_predicate: str = "holding",
) -> Demonstration:
    """Relabel an executed plan as a demonstration so it can join a training pool."""
    if len(actions) != len(trajectories):
        raise DemonstrationError(f"{execution_id}: {len(actions)} actions but {len(trajectories)} trajectories")
    segments = []
    for edge, trajectory in zip(actions, trajectories):
        schema = schema_from_action(domain.action(edge.schema), frame_types, holding_predicate).bind(
            edge.binding(domain)
        )
        segments.append(
            DemoSegment(
                skill=edge.skill,
                label=edge.label,
                args=edge.args,
                state_before=graph.states[edge.source].key,
                state_after=graph.states[edge.target].key,
                schema=schema,
                trajectory=trajectory,
                features=trace(schema, trajectory, scene),
            )
        )
    return Demonstration(execution_id, scene, segments, source="execution")
