"""
Kinematic planar world: an N-link arm, scene objects with named frames, and
circle/rectangle obstacles.

The arm is a serial chain of revolute joints rooted at `ArmModel.base`. Links
collide as capsules (segment plus radius); objects and held objects collide as
circles. Nothing here integrates dynamics: a state is joint positions and
velocities plus what the gripper holds and where released objects ended up.

Most checks come in two flavours: a per-state function returning a `Verdict`,
and a batched function working on (n, J) joint arrays that rollouts use.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from tamp.constants import (
    DEFAULT_JOINT_LIMIT,
    DEFAULT_LINK_LENGTHS,
    DEFAULT_LINK_RADIUS,
    GRASP_ANGLE_TOLERANCE,
    GRASP_POSITION_TOLERANCE,
    IK_ANGLE_TOLERANCE,
    IK_DAMPING,
    IK_MAX_STEPS,
    IK_POSITION_TOLERANCE,
    IK_RESTARTS,
)
from tamp.utils.geometry import (
    IDENTITY,
    PlanarPose,
    compose_arrays,
    relative_arrays,
    wrap_angle,
)

logger = logging.getLogger(__name__)


class SimulationError(Exception):
    """Base exception for the kinematic simulator."""

    pass


class InverseKinematicsError(SimulationError):
    """No joint configuration within limits reaches the target."""

    pass


class UnreachableTargetError(InverseKinematicsError):
    """Target lies outside the arm's reachable workspace."""

    pass


class GraspError(SimulationError):
    pass


# ---------------------------------------------------------------------------
# World description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArmModel:
    base: PlanarPose = IDENTITY
    lengths: Tuple[float, ...] = DEFAULT_LINK_LENGTHS
    radii: Tuple[float, ...] = (DEFAULT_LINK_RADIUS,) * len(DEFAULT_LINK_LENGTHS)
    limits: Tuple[Tuple[float, float], ...] = ((-DEFAULT_JOINT_LIMIT, DEFAULT_JOINT_LIMIT),) * len(
        DEFAULT_LINK_LENGTHS
    )

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(l) for l in self.lengths))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        object.__setattr__(self, "limits", tuple((float(lo), float(hi)) for lo, hi in self.limits))
        if not self.lengths:
            raise SimulationError("Arm needs at least one link")
        if len(self.radii) != len(self.lengths) or len(self.limits) != len(self.lengths):
            raise SimulationError("Arm lengths, radii and limits must have one entry per joint")
        if any(l <= 0 for l in self.lengths) or any(r <= 0 for r in self.radii):
            raise SimulationError("Link lengths and radii must be positive")
        if any(lo >= hi for lo, hi in self.limits):
            raise SimulationError(f"Joint limits must satisfy lo < hi, got {self.limits}")

    @classmethod
    def uniform(cls, lengths: Sequence[float], radius: float = DEFAULT_LINK_RADIUS,
                limit: float = DEFAULT_JOINT_LIMIT, base: PlanarPose = IDENTITY) -> "ArmModel":
        n = len(lengths)
        return cls(base, tuple(lengths), (radius,) * n, ((-limit, limit),) * n)

    @property
    def n_joints(self) -> int:
        return len(self.lengths)

    @property
    def reach(self) -> float:
        return float(sum(self.lengths))

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.limits])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.limits])


@dataclass(frozen=True)
class SceneObject:
    name: str
    pose: PlanarPose
    category: str = "other"
    radius: float = 0.03
    frames: Dict[str, PlanarPose] = field(default_factory=dict)

    def __post_init__(self):
        if self.radius <= 0:
            raise SimulationError(f"Object '{self.name}' radius must be positive")

    def frame_pose(self, frame: str, pose: Optional[PlanarPose] = None) -> PlanarPose:
        """World pose of a named frame; `pose` overrides the object's scene pose."""
        if frame not in self.frames:
            raise SimulationError(f"Object '{self.name}' has no frame '{frame}'")
        return (pose or self.pose).compose(self.frames[frame])


@dataclass(frozen=True)
class CircleObstacle:
    name: str
    x: float
    y: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise SimulationError(f"Obstacle '{self.name}' radius must be positive")


@dataclass(frozen=True)
class RectObstacle:
    name: str
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if self.xmax <= self.xmin or self.ymax <= self.ymin:
            raise SimulationError(f"Obstacle '{self.name}' must have positive extents")


Obstacle = CircleObstacle | RectObstacle


@dataclass(frozen=True)
class Scene:
    name: str = "scene"
    arm: ArmModel = field(default_factory=ArmModel)
    objects: Tuple[SceneObject, ...] = ()
    obstacles: Tuple[Obstacle, ...] = ()
    bounds: Tuple[float, float, float, float] = (-1.0, -1.0, 1.0, 1.0)
    home: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        object.__setattr__(self, "home", tuple(float(q) for q in self.home) or (0.0,) * self.arm.n_joints)
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            raise SimulationError(f"Object names must be unique: {names}")
        xmin, ymin, xmax, ymax = self.bounds
        if xmax <= xmin or ymax <= ymin:
            raise SimulationError("Workspace bounds must have positive extents")
        if len(self.home) != self.arm.n_joints:
            raise SimulationError("Home configuration must have one value per joint")

    def start_state(self) -> "RobotState":
        return RobotState(self.home)

    def object(self, name: str) -> SceneObject:
        for obj in self.objects:
            if obj.name == name:
                return obj
        raise SimulationError(f"Scene '{self.name}' has no object '{name}'")

    def has_object(self, name: str) -> bool:
        return any(o.name == name for o in self.objects)

    def with_obstacles(self, *obstacles: Obstacle, name: Optional[str] = None) -> "Scene":
        return replace(self, name=name or self.name, obstacles=self.obstacles + tuple(obstacles))


@dataclass(frozen=True)
class Attachment:
    name: str
    offset: PlanarPose


@dataclass(frozen=True)
class RobotState:
    q: Tuple[float, ...]
    dq: Tuple[float, ...] = ()
    attached: Optional[Attachment] = None
    object_poses: Tuple[Tuple[str, PlanarPose], ...] = ()

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        dq = tuple(float(v) for v in self.dq) if self.dq else (0.0,) * len(q)
        if len(dq) != len(q):
            raise SimulationError("Joint velocities must match joint positions")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "dq", dq)
        object.__setattr__(self, "object_poses", tuple(sorted(self.object_poses, key=lambda p: p[0])))

    @property
    def q_array(self) -> np.ndarray:
        return np.array(self.q)

    @property
    def dq_array(self) -> np.ndarray:
        return np.array(self.dq)

    def moved_pose(self, name: str) -> Optional[PlanarPose]:
        return dict(self.object_poses).get(name)

    def object_pose(self, scene: Scene, name: str) -> PlanarPose:
        """Current world pose of an object, following the gripper if held."""
        if self.attached is not None and self.attached.name == name:
            ee, _ = forward_kinematics(scene.arm, self.q)
            return ee.compose(self.attached.offset)
        return self.moved_pose(name) or scene.object(name).pose

    def with_object_pose(self, name: str, pose: PlanarPose) -> "RobotState":
        poses = dict(self.object_poses)
        poses[name] = pose
        return replace(self, object_poses=tuple(poses.items()))

    def to_dict(self) -> dict:
        return {
            "q": list(self.q),
            "dq": list(self.dq),
            "attached": (
                {"name": self.attached.name, "offset": self.attached.offset.as_list()}
                if self.attached
                else None
            ),
            "object_poses": {name: pose.as_list() for name, pose in self.object_poses},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RobotState":
        attached = data.get("attached")
        return cls(
            tuple(data["q"]),
            tuple(data.get("dq", ())),
            Attachment(attached["name"], PlanarPose.from_array(attached["offset"])) if attached else None,
            tuple((k, PlanarPose.from_array(v)) for k, v in data.get("object_poses", {}).items()),
        )


@dataclass(frozen=True)
class Control:
    dq: Tuple[float, ...]
    gripper: float = 0.0


@dataclass(frozen=True)
class Verdict:
    valid: bool
    kind: str = "ok"  # ok | collision | joint-limit | ik | grasp
    entity: Optional[str] = None

    def __bool__(self) -> bool:
        return self.valid

    def __str__(self) -> str:
        if self.valid:
            return "valid"
        return f"{self.kind}: {self.entity}" if self.entity else self.kind


VALID = Verdict(True)


@dataclass(frozen=True)
class SkillEffect:
    """Continuous side effects of a symbolic action, applied at trajectory end."""

    gripper_start: float = 0.0
    gripper_end: float = 0.0
    grasp_role: Optional[str] = None
    release: bool = False

    def gripper_profile(self, phase: np.ndarray) -> np.ndarray:
        """Gripper command over normalized time in [0, 1]."""
        return self.gripper_start + (self.gripper_end - self.gripper_start) * np.clip(phase, 0.0, 1.0)


HOLD = SkillEffect()


# ---------------------------------------------------------------------------
# Kinematics
# ---------------------------------------------------------------------------


def fk_batch(arm: ArmModel, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Forward kinematics for joint arrays of shape (..., J).

    Returns end-effector poses (..., 3) and joint points (..., J + 1, 2) with
    the base position first.
    """
    q = np.asarray(q, dtype=float)
    angles = arm.base.theta + np.cumsum(q, axis=-1)
    lengths = np.asarray(arm.lengths)
    steps = np.stack([lengths * np.cos(angles), lengths * np.sin(angles)], axis=-1)
    points = np.concatenate(
        [np.broadcast_to([arm.base.x, arm.base.y], q.shape[:-1] + (1, 2)),
         np.array([arm.base.x, arm.base.y]) + np.cumsum(steps, axis=-2)],
        axis=-2,
    )
    ee = np.empty(q.shape[:-1] + (3,))
    ee[..., :2] = points[..., -1, :]
    ee[..., 2] = wrap_angle(angles[..., -1])
    return ee, points


def forward_kinematics(arm: ArmModel, q: Sequence[float]) -> Tuple[PlanarPose, np.ndarray]:
    q = np.asarray(q, dtype=float)
    if q.shape != (arm.n_joints,):
        raise SimulationError(f"Expected {arm.n_joints} joint values, got {q.shape}")
    ee, points = fk_batch(arm, q)
    return PlanarPose.from_array(ee), points


def jacobian(arm: ArmModel, q: Sequence[float]) -> np.ndarray:
    """3 x J Jacobian of (x, y, theta) with respect to joint positions."""
    q = np.asarray(q, dtype=float)
    angles = arm.base.theta + np.cumsum(q)
    lengths = np.asarray(arm.lengths)
    dx = -lengths * np.sin(angles)
    dy = lengths * np.cos(angles)
    jac = np.empty((3, arm.n_joints))
    jac[0] = np.cumsum(dx[::-1])[::-1]
    jac[1] = np.cumsum(dy[::-1])[::-1]
    jac[2] = 1.0
    return jac


def _fit_limits(q: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Shift wrapped angles by 2π where that brings them inside the limits."""
    q = wrap_angle(q)
    q = np.where(q < lower, q + 2.0 * np.pi, q)
    q = np.where(q > upper, q - 2.0 * np.pi, q)
    return q


def _within_limits(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    return np.all((q >= arm.lower - 1e-12) & (q <= arm.upper + 1e-12), axis=-1)


def _pose_error(arm: ArmModel, q: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    ee, _ = fk_batch(arm, q)
    pos = np.hypot(ee[..., 0] - targets[..., 0], ee[..., 1] - targets[..., 1])
    ang = np.abs(wrap_angle(ee[..., 2] - targets[..., 2]))
    return pos, ang


def _analytic_candidates(arm: ArmModel, local: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """
    Closed-form solutions for arms with up to three joints, in the base frame.

    Returns candidate joint arrays (each (n, J)) and a mask of targets whose
    position lies outside the reachable annulus.
    """
    n = local.shape[0]
    lengths = arm.lengths
    if arm.n_joints == 1:
        q = np.arctan2(local[:, 1], local[:, 0])[:, None]
        radius = np.hypot(local[:, 0], local[:, 1])
        unreachable = np.abs(radius - lengths[0]) > IK_POSITION_TOLERANCE
        return [q], unreachable

    if arm.n_joints == 2:
        wx, wy = local[:, 0], local[:, 1]
        l1, l2 = lengths
    else:
        l1, l2, l3 = lengths
        wx = local[:, 0] - l3 * np.cos(local[:, 2])
        wy = local[:, 1] - l3 * np.sin(local[:, 2])

    c2 = (wx**2 + wy**2 - l1**2 - l2**2) / (2.0 * l1 * l2)
    unreachable = np.abs(c2) > 1.0 + 1e-12
    c2 = np.clip(c2, -1.0, 1.0)
    candidates = []
    for sign in (1.0, -1.0):
        q2 = sign * np.arccos(c2)
        q1 = np.arctan2(wy, wx) - np.arctan2(l2 * np.sin(q2), l1 + l2 * np.cos(q2))
        if arm.n_joints == 2:
            candidates.append(np.stack([q1, q2], axis=1))
        else:
            q3 = local[:, 2] - q1 - q2
            candidates.append(np.stack([q1, q2, q3], axis=1))
    return candidates, unreachable


def ik_batch(arm: ArmModel, targets: np.ndarray, seeds: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched inverse kinematics.

    Returns joint arrays (n, J) and a boolean mask of targets that were solved
    within tolerance and joint limits. Unsolved rows carry the seed.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    n = targets.shape[0]
    if arm.n_joints > 3:
        out = seeds.copy()
        ok = np.zeros(n, dtype=bool)
        for i in range(n):
            try:
                out[i] = dls_inverse_kinematics(arm, PlanarPose.from_array(targets[i]), seeds[i])
                ok[i] = True
            except InverseKinematicsError:
                pass
        return out, ok

    base = np.broadcast_to(arm.base.as_array(), targets.shape)
    local = relative_arrays(base, targets)
    candidates, unreachable = _analytic_candidates(arm, local)

    best = seeds.copy()
    best_cost = np.full(n, np.inf)
    for candidate in candidates:
        candidate = _fit_limits(candidate, arm.lower, arm.upper)
        pos, ang = _pose_error(arm, candidate, targets)
        usable = (
            _within_limits(arm, candidate)
            & (pos <= IK_POSITION_TOLERANCE)
            & (ang <= IK_ANGLE_TOLERANCE)
            & ~unreachable
        )
        cost = np.where(usable, np.linalg.norm(candidate - seeds, axis=1), np.inf)
        better = cost < best_cost
        best[better] = candidate[better]
        best_cost[better] = cost[better]
    return best, np.isfinite(best_cost)


def dls_inverse_kinematics(
    arm: ArmModel,
    target: PlanarPose,
    seed: Sequence[float],
    restarts: int = IK_RESTARTS,
    damping: float = IK_DAMPING,
    max_steps: int = IK_MAX_STEPS,
) -> np.ndarray:
    """Damped least squares from `seed`, then from seeded random restarts."""
    radius = target.distance(arm.base)
    if radius > arm.reach + IK_POSITION_TOLERANCE:
        raise UnreachableTargetError(
            f"Target at distance {radius:.4f} m is beyond arm reach {arm.reach:.4f} m"
        )

    goal = target.as_array()
    rng = np.random.default_rng(0)
    starts = [np.asarray(seed, dtype=float)] + [
        rng.uniform(arm.lower, arm.upper) for _ in range(restarts)
    ]
    for q in starts:
        q = np.clip(q.copy(), arm.lower, arm.upper)
        for _ in range(max_steps):
            ee, _ = fk_batch(arm, q)
            err = np.array([goal[0] - ee[0], goal[1] - ee[1], wrap_angle(goal[2] - ee[2])])
            if np.hypot(err[0], err[1]) <= IK_POSITION_TOLERANCE and abs(err[2]) <= IK_ANGLE_TOLERANCE:
                if _within_limits(arm, q):
                    return q
                break
            jac = jacobian(arm, q)
            step = jac.T @ np.linalg.solve(jac @ jac.T + damping**2 * np.eye(3), err)
            q = np.clip(q + step, arm.lower, arm.upper)
    raise InverseKinematicsError(f"No limit-respecting solution for target {target}")


def inverse_kinematics(arm: ArmModel, target: PlanarPose, seed: Sequence[float]) -> np.ndarray:
    seed = np.asarray(seed, dtype=float)
    if arm.n_joints > 3:
        return dls_inverse_kinematics(arm, target, seed)

    local = arm.base.relative(target).as_array()[None, :]
    _, unreachable = _analytic_candidates(arm, local)
    if unreachable[0]:
        raise UnreachableTargetError(
            f"Target {target} is outside the reachable workspace of the arm"
        )
    q, ok = ik_batch(arm, target.as_array()[None, :], seed[None, :])
    if not ok[0]:
        raise InverseKinematicsError(f"No limit-respecting solution for target {target}")
    return q[0]


# ---------------------------------------------------------------------------
# Collision geometry (vectorized)
# ---------------------------------------------------------------------------


def point_segment_distance(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = np.sum(ab * ab, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(denom > 0.0, np.sum((p - a) * ab, axis=-1) / denom, 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(closest - p, axis=-1)


def point_rect_distance(p: np.ndarray, rect: RectObstacle) -> np.ndarray:
    dx = np.maximum.reduce([rect.xmin - p[..., 0], np.zeros(p.shape[:-1]), p[..., 0] - rect.xmax])
    dy = np.maximum.reduce([rect.ymin - p[..., 1], np.zeros(p.shape[:-1]), p[..., 1] - rect.ymax])
    return np.hypot(dx, dy)


def segment_intersects_rect(a: np.ndarray, b: np.ndarray, rect: RectObstacle) -> np.ndarray:
    """Liang-Barsky clipping test."""
    d = b - a
    t0 = np.zeros(a.shape[:-1])
    t1 = np.ones(a.shape[:-1])
    rejected = np.zeros(a.shape[:-1], dtype=bool)
    bounds = (
        (-d[..., 0], a[..., 0] - rect.xmin),
        (d[..., 0], rect.xmax - a[..., 0]),
        (-d[..., 1], a[..., 1] - rect.ymin),
        (d[..., 1], rect.ymax - a[..., 1]),
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        for p, q in bounds:
            parallel = p == 0.0
            rejected |= parallel & (q < 0.0)
            r = np.where(parallel, 0.0, q / np.where(parallel, 1.0, p))
            t0 = np.where(~parallel & (p < 0.0), np.maximum(t0, r), t0)
            t1 = np.where(~parallel & (p > 0.0), np.minimum(t1, r), t1)
    return ~rejected & (t0 <= t1)


def segment_rect_distance(a: np.ndarray, b: np.ndarray, rect: RectObstacle) -> np.ndarray:
    dist = np.minimum(point_rect_distance(a, rect), point_rect_distance(b, rect))
    for cx, cy in ((rect.xmin, rect.ymin), (rect.xmin, rect.ymax), (rect.xmax, rect.ymin), (rect.xmax, rect.ymax)):
        corner = np.broadcast_to([cx, cy], a.shape)
        dist = np.minimum(dist, point_segment_distance(a, b, corner))
    return np.where(segment_intersects_rect(a, b, rect), 0.0, dist)


def entity_names(scene: Scene) -> List[str]:
    """Names indexed by violation code: joints, then obstacles, then objects."""
    return (
        [f"joint {j}" for j in range(scene.arm.n_joints)]
        + [o.name for o in scene.obstacles]
        + [o.name for o in scene.objects]
    )


def violation_codes(
    scene: Scene,
    q: np.ndarray,
    attached_name: Optional[str] = None,
    attached_offsets: Optional[np.ndarray] = None,
    object_poses: Optional[Dict[str, np.ndarray]] = None,
) -> np.ndarray:
    """
    First violated entity for each joint row of `q` (..., J), or -1 if valid.

    `attached_offsets` (..., 3) give the held object's pose in the end-effector
    frame; `object_poses` maps object names to (..., 3) world poses overriding
    the scene. Joint limits are checked first, then arm links, then the held
    object's footprint.
    """
    arm = scene.arm
    q = np.asarray(q, dtype=float)
    batch = q.shape[:-1]
    object_poses = object_poses or {}
    checks: List[np.ndarray] = []

    lower, upper = arm.lower, arm.upper
    for j in range(arm.n_joints):
        checks.append((q[..., j] < lower[j]) | (q[..., j] > upper[j]))

    ee, points = fk_batch(arm, q)
    starts, ends = points[..., :-1, :], points[..., 1:, :]
    radii = np.asarray(arm.radii)

    held = None
    if attached_name is not None and attached_offsets is not None:
        held = compose_arrays(ee, np.broadcast_to(attached_offsets, ee.shape))
        held_radius = scene.object(attached_name).radius

    def arm_hits_circle(center: np.ndarray, radius: float) -> np.ndarray:
        dist = point_segment_distance(starts, ends, center[..., None, :])
        return np.any(dist < radii + radius, axis=-1)

    for obstacle in scene.obstacles:
        if isinstance(obstacle, CircleObstacle):
            center = np.broadcast_to([obstacle.x, obstacle.y], batch + (2,))
            hit = arm_hits_circle(center, obstacle.radius)
            if held is not None:
                hit |= np.hypot(held[..., 0] - obstacle.x, held[..., 1] - obstacle.y) < held_radius + obstacle.radius
        else:
            hit = np.any(segment_rect_distance(starts, ends, obstacle) < radii, axis=-1)
            if held is not None:
                hit |= point_rect_distance(held[..., :2], obstacle) < held_radius
        checks.append(hit)

    for obj in scene.objects:
        if obj.name == attached_name:
            checks.append(np.zeros(batch, dtype=bool))
            continue
        pose = object_poses.get(obj.name)
        center = np.broadcast_to(obj.pose.as_array()[:2] if pose is None else np.asarray(pose)[..., :2], batch + (2,))
        hit = arm_hits_circle(center, obj.radius)
        if held is not None:
            hit |= np.linalg.norm(held[..., :2] - center, axis=-1) < held_radius + obj.radius
        checks.append(hit)

    if not checks:
        return np.full(batch, -1)
    stacked = np.stack(checks, axis=-1)
    return np.where(np.any(stacked, axis=-1), np.argmax(stacked, axis=-1), -1)


def _state_arrays(scene: Scene, state: RobotState):
    offsets = state.attached.offset.as_array() if state.attached else None
    poses = {name: pose.as_array() for name, pose in state.object_poses}
    return (state.attached.name if state.attached else None), offsets, poses


def check_valid(scene: Scene, state: RobotState) -> Verdict:
    name, offsets, poses = _state_arrays(scene, state)
    code = int(violation_codes(scene, state.q_array, name, offsets, poses))
    if code < 0:
        return VALID
    entity = entity_names(scene)[code]
    kind = "joint-limit" if code < scene.arm.n_joints else "collision"
    return Verdict(False, kind, entity)


def verdict_from_code(scene: Scene, code: int) -> Verdict:
    if code < 0:
        return VALID
    kind = "joint-limit" if code < scene.arm.n_joints else "collision"
    return Verdict(False, kind, entity_names(scene)[code])


# ---------------------------------------------------------------------------
# Grasping
# ---------------------------------------------------------------------------


def grasp_frame_error(scene: Scene, state: RobotState, name: str) -> Tuple[str, float, float]:
    """Closest declared frame of `name` to the end effector: (frame, distance, angle)."""
    obj = scene.object(name)
    if not obj.frames:
        raise GraspError(f"Object '{name}' declares no grasp frames")
    ee, _ = forward_kinematics(scene.arm, state.q)
    pose = state.object_pose(scene, name)
    scored = []
    for frame in sorted(obj.frames):
        target = obj.frame_pose(frame, pose)
        scored.append((ee.distance(target), ee.angle_to(target), frame))
    dist, ang, frame = min(scored)
    return frame, dist, ang


def apply_grasp(
    scene: Scene,
    state: RobotState,
    name: str,
    position_tolerance: float = GRASP_POSITION_TOLERANCE,
    angle_tolerance: float = GRASP_ANGLE_TOLERANCE,
) -> RobotState:
    if state.attached is not None:
        raise GraspError(f"Cannot grasp '{name}': already holding '{state.attached.name}'")
    frame, dist, ang = grasp_frame_error(scene, state, name)
    if dist > position_tolerance or ang > angle_tolerance:
        raise GraspError(
            f"End effector is {dist:.3f} m / {ang:.3f} rad from the closest grasp frame "
            f"'{frame}' of '{name}' (tolerance {position_tolerance} m / {angle_tolerance} rad)"
        )
    ee, _ = forward_kinematics(scene.arm, state.q)
    offset = ee.relative(state.object_pose(scene, name))
    logger.debug(f"Grasped '{name}' at frame '{frame}' with offset {offset}")
    return replace(state, attached=Attachment(name, offset))


def apply_release(scene: Scene, state: RobotState, name: Optional[str] = None) -> RobotState:
    if state.attached is None:
        logger.warning(f"Release requested with nothing held{f' (expected {name})' if name else ''}")
        return state
    if name is not None and state.attached.name != name:
        logger.warning(f"Release of '{name}' requested while holding '{state.attached.name}'")
    pose = state.object_pose(scene, state.attached.name)
    released = state.with_object_pose(state.attached.name, pose)
    return replace(released, attached=None)
