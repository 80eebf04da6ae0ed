"""
Feature vectors relating the manipulation frame to the objects an action is
about.

A vector is the gripper command followed by one 13-value block per relevant
object:

    [t, p_x, p_y, p_z, r_x, r_y, r_z, r_w, |p|, v_x, v_y, v_z, |v|]

where p and r are the position and orientation of the manipulation frame
expressed in the object's frame and v is the rate of change of p. The
manipulation frame is the end effector, or the held object once something is
attached. t runs from 0 to 1 over one action.

Which objects are relevant is read off the PDDL action: every parameter whose
type is not a frame type (faces and similar named frames) gets a block, except
the parameter the gripper holds, which becomes the manipulation frame instead.
"""

import csv
import io
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np

from tamp.utils.geometry import PlanarPose, planar_quaternions, relative_arrays

from .pddl_parser import ActionSchema
from .simulator import (
    Control,
    RobotState,
    Scene,
    SkillEffect,
    forward_kinematics,
    jacobian,
)

if TYPE_CHECKING:
    from tamp.utils.dmp import Trajectory, TrajectoryBatch

BLOCK_COORDINATES = ("t", "px", "py", "pz", "rx", "ry", "rz", "rw", "p_norm", "vx", "vy", "vz", "v_norm")
BLOCK_SIZE = len(BLOCK_COORDINATES)


class FeatureError(Exception):
    pass


class MissingObjectError(FeatureError):
    pass


@dataclass(frozen=True)
class FeatureSchema:
    skill: str
    roles: Tuple[str, ...]
    frame_role: Optional[str] = None
    frame_param: Optional[str] = None
    binding: Tuple[Tuple[str, str], ...] = ()

    @property
    def dimension(self) -> int:
        return 1 + BLOCK_SIZE * len(self.roles)

    @property
    def names(self) -> List[str]:
        names = ["gripper"]
        for role in self.roles:
            names.extend(f"{role.lstrip('?')}.{c}" for c in BLOCK_COORDINATES)
        return names

    def index(self, role: str, coordinate: str) -> int:
        return 1 + BLOCK_SIZE * self.roles.index(role) + BLOCK_COORDINATES.index(coordinate)

    def bind(self, binding: Dict[str, str]) -> "FeatureSchema":
        return replace(self, binding=tuple(sorted(binding.items())))

    @property
    def bound(self) -> Dict[str, str]:
        return dict(self.binding)

    def object_for(self, role: str) -> str:
        try:
            return self.bound[role]
        except KeyError:
            raise FeatureError(f"Schema '{self.skill}' has no object bound to role '{role}'") from None

    @property
    def objects(self) -> List[str]:
        return [self.object_for(r) for r in self.roles]

    @property
    def frame_name(self) -> Optional[str]:
        """The named frame (e.g. a link face) chosen by this grounding, if any."""
        return self.bound.get(self.frame_param) if self.frame_param else None

    def to_dict(self) -> dict:
        return {
            "skill": self.skill,
            "roles": list(self.roles),
            "frame_role": self.frame_role,
            "frame_param": self.frame_param,
            "dimension": self.dimension,
            "names": self.names,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureSchema":
        return cls(data["skill"], tuple(data["roles"]), data.get("frame_role"), data.get("frame_param"))


@dataclass(eq=False)
class FeatureTrace:
    names: List[str]
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise FeatureError("Feature trace timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["time"] + self.names)
        for time, row in zip(self.times, self.values):
            writer.writerow([repr(float(time))] + [repr(float(v)) for v in row])
        return buffer.getvalue()


# ---------------------------------------------------------------------------
# PDDL-derived skill semantics
# ---------------------------------------------------------------------------


def schema_from_action(
    action: ActionSchema,
    frame_types: Sequence[str] = ("face",),
    holding_predicate: str = "holding",
) -> FeatureSchema:
    frame_param = next((p.name for p in action.parameters if p.type in frame_types), None)
    frame_role = next(
        (
            l.atom.args[0]
            for l in action.precondition
            if l.positive and l.atom.predicate == holding_predicate and l.atom.args
        ),
        None,
    )
    roles = tuple(
        p.name for p in action.parameters if p.type not in frame_types and p.name != frame_role
    )
    return FeatureSchema(action.name, roles, frame_role, frame_param)


def effect_from_action(
    action: ActionSchema,
    gripper_predicate: str = "hand-occupied",
    holding_predicate: str = "holding",
) -> SkillEffect:
    """Gripper profile and grasp/release side effect implied by an action's PDDL."""
    occupied = 0.0
    for literal in action.precondition:
        if literal.atom.predicate == gripper_predicate:
            occupied = 1.0 if literal.positive else 0.0

    if any(a.predicate == gripper_predicate for a in action.add_effects):
        held = next((a.args[0] for a in action.add_effects if a.predicate == holding_predicate and a.args), None)
        return SkillEffect(occupied, 1.0, grasp_role=held)
    if any(a.predicate == gripper_predicate for a in action.del_effects):
        return SkillEffect(occupied, 0.0, release=True)
    return SkillEffect(occupied, occupied)


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------


def _check_objects(schema: FeatureSchema, scene: Scene):
    for name in schema.objects:
        if not scene.has_object(name):
            raise MissingObjectError(f"Object '{name}' required by '{schema.skill}' is not in scene '{scene.name}'")


def _block(t: np.ndarray, rel: np.ndarray, vel: np.ndarray) -> np.ndarray:
    """Assemble (..., 13) blocks from relative poses (..., 3) and velocities (..., 2)."""
    shape = rel.shape[:-1]
    block = np.zeros(shape + (BLOCK_SIZE,))
    block[..., 0] = t
    block[..., 1:3] = rel[..., :2]
    block[..., 4:8] = planar_quaternions(rel[..., 2])
    block[..., 8] = np.hypot(rel[..., 0], rel[..., 1])
    block[..., 9:11] = vel
    block[..., 12] = np.hypot(vel[..., 0], vel[..., 1])
    return block


def extract(schema: FeatureSchema, t: float, state: RobotState, control: Control, scene: Scene) -> np.ndarray:
    """Feature vector for one state, with the analytic velocity of the manipulation frame."""
    _check_objects(schema, scene)
    ee, _ = forward_kinematics(scene.arm, state.q)
    jac = jacobian(scene.arm, state.q)
    twist = jac @ state.dq_array

    manip = ee
    velocity = twist[:2]
    if state.attached is not None:
        manip = ee.compose(state.attached.offset)
        lever = manip.position - ee.position
        velocity = velocity + twist[2] * np.array([-lever[1], lever[0]])

    values = [float(control.gripper)]
    for name in schema.objects:
        obj = state.object_pose(scene, name)
        rel = obj.relative(manip).as_array()
        c, s = np.cos(obj.theta), np.sin(obj.theta)
        local_velocity = np.array([c * velocity[0] + s * velocity[1], -s * velocity[0] + c * velocity[1]])
        values.extend(_block(np.asarray(t), rel, local_velocity))
    return np.asarray(values, dtype=float)


def feature_arrays(
    schema: FeatureSchema,
    times: np.ndarray,
    manipulation: np.ndarray,
    gripper: np.ndarray,
    object_poses: Dict[str, np.ndarray],
    held_name: Optional[str] = None,
) -> np.ndarray:
    """
    Features for n trajectories at once.

    `manipulation` is (n, T, 3); `object_poses` maps names to (n, 3) world poses
    that stay fixed over the trajectory. Velocities are finite differences of
    the relative position over `times`.
    """
    n, steps = manipulation.shape[:2]
    duration = times[-1] - times[0]
    t = (times - times[0]) / duration if duration > 0 else np.zeros_like(times)
    out = np.empty((n, steps, schema.dimension))
    out[..., 0] = gripper
    for k, name in enumerate(schema.objects):
        if name == held_name:
            obj = manipulation
        elif name in object_poses:
            obj = object_poses[name][:, None, :]
        else:
            raise MissingObjectError(f"Object '{name}' required by '{schema.skill}' has no pose")
        rel = relative_arrays(obj, manipulation)
        if steps > 1:
            vel = np.gradient(rel[..., :2], times, axis=1)
        else:
            vel = np.zeros(rel.shape[:-1] + (2,))
        start = 1 + k * BLOCK_SIZE
        out[..., start : start + BLOCK_SIZE] = _block(t, rel, vel)
    return out


def trace_batch(schema: FeatureSchema, batch: "TrajectoryBatch", scene: Scene) -> np.ndarray:
    _check_objects(schema, scene)
    return feature_arrays(
        schema,
        batch.times,
        batch.manipulation_poses,
        batch.gripper,
        batch.object_poses,
        batch.attached_name,
    )


def trace(schema: FeatureSchema, trajectory: "Trajectory", scene: Scene) -> FeatureTrace:
    if len(trajectory.times) == 0:
        raise FeatureError("Cannot trace an empty trajectory")
    _check_objects(schema, scene)
    values = feature_arrays(
        schema,
        trajectory.times,
        trajectory.manipulation_poses[None],
        trajectory.gripper,
        {k: v[None] for k, v in trajectory.object_poses.items()},
        trajectory.attached_name,
    )[0]
    return FeatureTrace(schema.names, trajectory.times.copy(), values)


def relative_pose_from_block(values: np.ndarray, schema: FeatureSchema, role: Optional[str] = None) -> PlanarPose:
    """Recover the manipulation frame pose in an object's frame from a feature row."""
    role = role or schema.roles[0]
    px = values[schema.index(role, "px")]
    py = values[schema.index(role, "py")]
    theta = 2.0 * np.arctan2(values[schema.index(role, "rz")], values[schema.index(role, "rw")])
    return PlanarPose(px, py, theta)
