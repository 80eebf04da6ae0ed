"""
Discrete movement primitives in joint space.

A trajectory parameter ξ is a (joints x basis) weight matrix plus an
end-effector goal pose. Rollouts solve IK for the goal from the start
configuration, then integrate one critically damped transformation system per
joint, all driven by a shared exponentially decaying phase:

    τ v' = K (g - q) - D v + (g - q0) f(x)
    τ q' = v
    τ x' = -a x

f(x) is the phase-weighted, normalized Gaussian basis. The commanded joint
velocity u_i = v_{i+1} / τ is what the simulator integrates, so control noise
enters the state update directly. Nothing is clamped: joint limits and
collisions are judged afterwards by `is_valid`.
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from tamp.constants import DMP_BASIS_COUNT, DMP_PHASE_DECAY, DMP_SPRING
from tamp.services.simulator import (
    HOLD,
    VALID,
    Control,
    GraspError,
    RobotState,
    Scene,
    SkillEffect,
    Verdict,
    apply_grasp,
    apply_release,
    check_valid,
    fk_batch,
    ik_batch,
    verdict_from_code,
    violation_codes,
)
from tamp.utils.geometry import PlanarPose, compose_arrays, wrap_angle

logger = logging.getLogger(__name__)


class DmpError(Exception):
    pass


@dataclass(frozen=True)
class DmpConfig:
    n_basis: int = DMP_BASIS_COUNT
    spring: float = DMP_SPRING
    dt: float = 0.02
    phase_decay: float = DMP_PHASE_DECAY

    def __post_init__(self):
        if self.n_basis < 1:
            raise DmpError("A DMP needs at least one basis function")
        if self.spring <= 0 or self.dt <= 0 or self.phase_decay <= 0:
            raise DmpError("DMP spring, dt and phase decay must be positive")

    @property
    def damping(self) -> float:
        return 2.0 * np.sqrt(self.spring)

    @property
    def centers(self) -> np.ndarray:
        return np.exp(-self.phase_decay * np.linspace(0.0, 1.0, self.n_basis))

    @property
    def widths(self) -> np.ndarray:
        c = self.centers
        if self.n_basis == 1:
            return np.ones(1)
        h = 1.0 / np.diff(c) ** 2
        return np.append(h, h[-1])

    def steps(self, duration: float) -> int:
        return max(1, int(round(duration / self.dt)))

    def phase(self, times: np.ndarray, duration: float) -> np.ndarray:
        return np.exp(-self.phase_decay * np.asarray(times) / duration)

    def basis(self, x: np.ndarray) -> np.ndarray:
        """Normalized basis activations times phase, shape (..., B)."""
        x = np.asarray(x, dtype=float)[..., None]
        psi = np.exp(-self.widths * (x - self.centers) ** 2)
        return psi * x / np.maximum(psi.sum(axis=-1, keepdims=True), 1e-300)


@dataclass(frozen=True, eq=False)
class TrajectoryParams:
    weights: np.ndarray
    goal: PlanarPose
    duration: float = 2.0

    def __post_init__(self):
        weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "weights", weights)
        if not np.all(np.isfinite(weights)) or not np.all(np.isfinite(self.goal.as_array())):
            raise DmpError("Trajectory parameters must be finite")
        if not self.duration > 0:
            raise DmpError(f"Duration must be positive, got {self.duration}")

    @property
    def n_joints(self) -> int:
        return self.weights.shape[0]

    @property
    def n_basis(self) -> int:
        return self.weights.shape[1]


def parameter_dimension(n_joints: int, n_basis: int) -> int:
    return n_joints * n_basis + 3


def params_as_vector(params: TrajectoryParams) -> np.ndarray:
    return np.concatenate([params.weights.ravel(), params.goal.as_array()])


def vector_as_params(
    vector: np.ndarray, n_joints: int, n_basis: int = DMP_BASIS_COUNT, duration: float = 2.0
) -> TrajectoryParams:
    vector = np.asarray(vector, dtype=float).ravel()
    expected = parameter_dimension(n_joints, n_basis)
    if vector.shape[0] != expected:
        raise DmpError(
            f"Parameter vector has length {vector.shape[0]}, expected {expected} "
            f"({n_joints} joints x {n_basis} basis + 3 goal)"
        )
    weights = vector[: n_joints * n_basis].reshape(n_joints, n_basis)
    x, y, theta = vector[-3:]
    return TrajectoryParams(weights, PlanarPose(x, y, wrap_angle(theta)), duration)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Trajectory:
    """Steps ⟨t_i, s_i, u_i⟩ for i = 0..N on a uniform grid."""

    times: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    controls: np.ndarray
    gripper: np.ndarray
    ee: np.ndarray
    start: RobotState
    final_state: RobotState
    object_poses: Dict[str, np.ndarray] = field(default_factory=dict)
    verdict: Verdict = VALID
    vector: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.times)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def attached_name(self) -> Optional[str]:
        return self.start.attached.name if self.start.attached else None

    @property
    def attached_offset(self) -> Optional[np.ndarray]:
        return self.start.attached.offset.as_array() if self.start.attached else None

    @property
    def manipulation_poses(self) -> np.ndarray:
        if self.start.attached is None:
            return self.ee
        return compose_arrays(self.ee, np.broadcast_to(self.attached_offset, self.ee.shape))

    @property
    def valid(self) -> bool:
        return bool(self.verdict)

    def state(self, i: int) -> RobotState:
        return RobotState(
            tuple(float(v) for v in self.q[i]),
            tuple(float(v) for v in self.dq[i]),
            self.start.attached,
            self.start.object_poses,
        )

    def control(self, i: int) -> Control:
        return Control(tuple(float(v) for v in self.controls[i]), float(self.gripper[i]))

    def to_csv(self) -> str:
        joints = self.q.shape[1]
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(
            ["t"] + [f"q{j}" for j in range(joints)] + [f"u{j}" for j in range(joints)] + ["gripper"]
        )
        for i, t in enumerate(self.times):
            writer.writerow(
                [f"{t:.6f}"]
                + [f"{v:.9g}" for v in self.q[i]]
                + [f"{v:.9g}" for v in self.controls[i]]
                + [f"{self.gripper[i]:.3g}"]
            )
        return buffer.getvalue()

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "q": self.q.tolist(),
            "dq": self.dq.tolist(),
            "controls": self.controls.tolist(),
            "gripper": self.gripper.tolist(),
            "start": self.start.to_dict(),
            "final": self.final_state.to_dict(),
            "verdict": {"valid": self.verdict.valid, "kind": self.verdict.kind, "entity": self.verdict.entity},
            "params": self.vector.tolist() if self.vector is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict, scene: Scene) -> "Trajectory":
        q = np.asarray(data["q"], dtype=float)
        start = RobotState.from_dict(data["start"])
        ee, _ = fk_batch(scene.arm, q)
        verdict = data.get("verdict") or {"valid": True}
        return cls(
            times=np.asarray(data["times"], dtype=float),
            q=q,
            dq=np.asarray(data.get("dq", np.zeros_like(q)), dtype=float),
            controls=np.asarray(data.get("controls", np.zeros_like(q)), dtype=float),
            gripper=np.asarray(data.get("gripper", np.zeros(len(q))), dtype=float),
            ee=ee,
            start=start,
            final_state=RobotState.from_dict(data["final"]) if data.get("final") else start,
            object_poses={k: v[0] for k, v in _object_pose_arrays(scene, [start]).items()},
            verdict=Verdict(verdict["valid"], verdict.get("kind", "ok"), verdict.get("entity")),
            vector=np.asarray(data["params"], dtype=float) if data.get("params") is not None else None,
        )


@dataclass(eq=False)
class TrajectoryBatch:
    """n rollouts of one action sharing a time grid and a held object."""

    times: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    controls: np.ndarray
    gripper: np.ndarray
    ee: np.ndarray
    starts: List[RobotState]
    final_states: List[RobotState]
    verdicts: List[Verdict]
    vectors: np.ndarray
    object_poses: Dict[str, np.ndarray] = field(default_factory=dict)
    attached_offsets: Optional[np.ndarray] = None
    start_index: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.q.shape[0]

    @property
    def attached_name(self) -> Optional[str]:
        first = self.starts[0].attached if self.starts else None
        return first.name if first else None

    @property
    def valid(self) -> np.ndarray:
        return np.array([bool(v) for v in self.verdicts], dtype=bool)

    @property
    def manipulation_poses(self) -> np.ndarray:
        if self.attached_offsets is None:
            return self.ee
        return compose_arrays(self.ee, np.broadcast_to(self.attached_offsets[:, None, :], self.ee.shape))

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(
            times=self.times,
            q=self.q[i],
            dq=self.dq[i],
            controls=self.controls[i],
            gripper=self.gripper,
            ee=self.ee[i],
            start=self.starts[i],
            final_state=self.final_states[i],
            object_poses={k: v[i] for k, v in self.object_poses.items()},
            verdict=self.verdicts[i],
            vector=self.vectors[i],
        )

    @classmethod
    def concatenate(cls, batches: Sequence["TrajectoryBatch"]) -> "TrajectoryBatch":
        if not batches:
            raise DmpError("Nothing to concatenate")
        if len(batches) == 1:
            return batches[0]
        first = batches[0]
        indexed = all(b.start_index is not None for b in batches)
        return cls(
            times=first.times,
            q=np.concatenate([b.q for b in batches]),
            dq=np.concatenate([b.dq for b in batches]),
            controls=np.concatenate([b.controls for b in batches]),
            gripper=first.gripper,
            ee=np.concatenate([b.ee for b in batches]),
            starts=[s for b in batches for s in b.starts],
            final_states=[s for b in batches for s in b.final_states],
            verdicts=[v for b in batches for v in b.verdicts],
            vectors=np.concatenate([b.vectors for b in batches]),
            object_poses={k: np.concatenate([b.object_poses[k] for b in batches]) for k in first.object_poses},
            attached_offsets=(
                np.concatenate([b.attached_offsets for b in batches])
                if first.attached_offsets is not None
                else None
            ),
            start_index=np.concatenate([b.start_index for b in batches]) if indexed else None,
        )

    def select(self, indices: Sequence[int]) -> "TrajectoryBatch":
        idx = np.asarray(indices, dtype=int)
        return TrajectoryBatch(
            times=self.times,
            q=self.q[idx],
            dq=self.dq[idx],
            controls=self.controls[idx],
            gripper=self.gripper,
            ee=self.ee[idx],
            starts=[self.starts[i] for i in idx],
            final_states=[self.final_states[i] for i in idx],
            verdicts=[self.verdicts[i] for i in idx],
            vectors=self.vectors[idx],
            object_poses={k: v[idx] for k, v in self.object_poses.items()},
            attached_offsets=self.attached_offsets[idx] if self.attached_offsets is not None else None,
            start_index=self.start_index[idx] if self.start_index is not None else None,
        )


def _object_pose_arrays(scene: Scene, starts: Sequence[RobotState]) -> Dict[str, np.ndarray]:
    """World poses (n, 3) of every object not held at the start."""
    held = starts[0].attached.name if starts and starts[0].attached else None
    return {
        obj.name: np.array([s.object_pose(scene, obj.name).as_array() for s in starts])
        for obj in scene.objects
        if obj.name != held
    }


# ---------------------------------------------------------------------------
# Rollout
# ---------------------------------------------------------------------------


def rollout_batch(
    vectors: np.ndarray,
    starts: Sequence[RobotState],
    scene: Scene,
    cfg: DmpConfig,
    duration: float = 2.0,
    effect: SkillEffect = HOLD,
    grasp_object: Optional[str] = None,
    noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    start_index: Optional[np.ndarray] = None,
) -> TrajectoryBatch:
    """
    Roll out n parameter vectors, one per start state (a single start is
    shared by every row).

    Each row gets its own noise stream spawned from `rng`, so a row's rollout
    does not depend on how many others are in the batch.
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    arm = scene.arm
    n, joints, n_basis = vectors.shape[0], arm.n_joints, cfg.n_basis
    if vectors.shape[1] != parameter_dimension(joints, n_basis):
        raise DmpError(
            f"Parameter vectors have length {vectors.shape[1]}, expected "
            f"{parameter_dimension(joints, n_basis)} for {joints} joints"
        )
    if not duration > 0:
        raise DmpError(f"Duration must be positive, got {duration}")
    starts = list(starts)
    if len(starts) == 1 and n > 1:
        starts = starts * n
    if len(starts) != n:
        raise DmpError(f"{len(starts)} start states for {n} parameter vectors")
    held = {s.attached.name if s.attached else None for s in starts}
    if len(held) > 1:
        raise DmpError("All start states of a batch must hold the same object")

    q0 = np.array([s.q_array for s in starts])
    dq0 = np.array([s.dq_array if len(s.dq) else np.zeros(joints) for s in starts])
    weights = vectors[:, : joints * n_basis].reshape(n, joints, n_basis)
    goals = vectors[:, -3:].copy()
    goals[:, 2] = wrap_angle(goals[:, 2])
    q_goal, solved = ik_batch(arm, goals, q0)

    steps = cfg.steps(duration)
    times = np.arange(steps + 1) * cfg.dt
    forcing = np.einsum("tb,njb->ntj", cfg.basis(cfg.phase(times, duration)), weights)
    scale = q_goal - q0

    eps = np.zeros((n, steps, joints))
    if noise > 0:
        if rng is None:
            raise DmpError("A random generator is required for noisy rollouts")
        for k, stream in enumerate(rng.spawn(n)):
            eps[k] = stream.normal(0.0, noise, size=(steps, joints))

    q = np.empty((n, steps + 1, joints))
    dq = np.empty_like(q)
    controls = np.zeros_like(q)
    q[:, 0], dq[:, 0] = q0, dq0
    v = duration * dq0
    rate = cfg.dt / duration
    for i in range(steps):
        v = v + rate * (cfg.spring * (q_goal - q[:, i]) - cfg.damping * v + scale * forcing[:, i])
        u = v / duration + eps[:, i]
        controls[:, i] = u
        q[:, i + 1] = q[:, i] + cfg.dt * u
        dq[:, i + 1] = u

    return assemble_batch(
        times,
        q,
        dq,
        controls,
        starts,
        scene,
        effect=effect,
        grasp_object=grasp_object,
        vectors=vectors,
        solved=solved,
        start_index=start_index,
    )


def assemble_batch(
    times: np.ndarray,
    q: np.ndarray,
    dq: np.ndarray,
    controls: np.ndarray,
    starts: Sequence[RobotState],
    scene: Scene,
    effect: SkillEffect = HOLD,
    grasp_object: Optional[str] = None,
    vectors: Optional[np.ndarray] = None,
    solved: Optional[np.ndarray] = None,
    start_index: Optional[np.ndarray] = None,
) -> TrajectoryBatch:
    """
    Validate joint paths (n, T, J) against the scene and apply the action's
    grasp or release to the final state of every valid one.
    """
    n = q.shape[0]
    starts = list(starts)
    ee, _ = fk_batch(scene.arm, q)
    attached_name = starts[0].attached.name if starts[0].attached else None
    offsets = (
        np.array([s.attached.offset.as_array() for s in starts]) if attached_name is not None else None
    )
    object_poses = _object_pose_arrays(scene, starts)
    codes = violation_codes(
        scene,
        q,
        attached_name,
        offsets[:, None, :] if offsets is not None else None,
        {k: v[:, None, :] for k, v in object_poses.items()},
    )

    verdicts: List[Verdict] = []
    finals: List[RobotState] = []
    for k in range(n):
        start = starts[k]
        final = RobotState(
            tuple(float(x) for x in q[k, -1]),
            tuple(float(x) for x in dq[k, -1]),
            start.attached,
            start.object_poses,
        )
        failed = np.flatnonzero(codes[k] >= 0)
        if solved is not None and not solved[k]:
            verdict = Verdict(False, "ik", "goal")
        elif failed.size:
            verdict = verdict_from_code(scene, int(codes[k, failed[0]]))
        else:
            verdict = VALID
        if verdict and grasp_object is not None:
            try:
                final = apply_grasp(scene, final, grasp_object)
            except GraspError as e:
                logger.debug(f"Rollout {k} misses the grasp: {e}")
                verdict = Verdict(False, "grasp", grasp_object)
        elif verdict and effect.release:
            final = apply_release(scene, final)
        verdicts.append(verdict)
        finals.append(final)

    duration = times[-1] - times[0]
    return TrajectoryBatch(
        times=times,
        q=q,
        dq=dq,
        controls=controls,
        gripper=effect.gripper_profile((times - times[0]) / duration if duration > 0 else np.ones_like(times)),
        ee=ee,
        starts=starts,
        final_states=finals,
        verdicts=verdicts,
        vectors=vectors if vectors is not None else np.zeros((n, 0)),
        object_poses=object_poses,
        attached_offsets=offsets,
        start_index=start_index,
    )


def rollout(
    params: TrajectoryParams,
    start: RobotState,
    scene: Scene,
    cfg: DmpConfig,
    effect: SkillEffect = HOLD,
    grasp_object: Optional[str] = None,
    noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Trajectory:
    if params.n_joints != scene.arm.n_joints or params.n_basis != cfg.n_basis:
        raise DmpError(
            f"Weights are {params.n_joints}x{params.n_basis}, "
            f"expected {scene.arm.n_joints}x{cfg.n_basis}"
        )
    batch = rollout_batch(
        params_as_vector(params)[None],
        [start],
        scene,
        cfg,
        duration=params.duration,
        effect=effect,
        grasp_object=grasp_object,
        noise=noise,
        rng=rng,
    )
    return batch.trajectory(0)


def is_valid(trajectory: Trajectory, scene: Scene) -> Verdict:
    """First failing step of the trajectory, or a failed goal IK or grasp."""
    for i in range(len(trajectory)):
        verdict = check_valid(scene, trajectory.state(i))
        if not verdict:
            return verdict
    if not trajectory.verdict and trajectory.verdict.kind in ("ik", "grasp"):
        return trajectory.verdict
    return VALID


# ---------------------------------------------------------------------------
# Imitation
# ---------------------------------------------------------------------------


def fit_weights(q: np.ndarray, times: np.ndarray, cfg: DmpConfig) -> np.ndarray:
    """Least-squares basis weights (J, B) reproducing a demonstrated joint path."""
    q = np.asarray(q, dtype=float)
    times = np.asarray(times, dtype=float)
    if q.ndim != 2 or len(q) != len(times) or len(times) < 3:
        raise DmpError("Need a (T, J) joint path with at least three samples to fit weights")
    duration = times[-1] - times[0]
    t = times - times[0]
    velocity = np.gradient(q, t, axis=0)
    acceleration = np.gradient(velocity, t, axis=0)
    start, goal = q[0], q[-1]
    target = duration**2 * acceleration - cfg.spring * (goal - q) + cfg.damping * duration * velocity
    phi = cfg.basis(cfg.phase(t, duration))

    weights = np.zeros((q.shape[1], cfg.n_basis))
    for j in range(q.shape[1]):
        span = goal[j] - start[j]
        if abs(span) < 1e-6:
            continue
        weights[j], *_ = np.linalg.lstsq(phi, target[:, j] / span, rcond=None)
    return weights

