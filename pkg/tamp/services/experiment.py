"""
Run configuration, planning trials and the experiment harness.

A RunConfig starts from settings.TAMP, is overlaid with a JSON config file and
then with command-line flags. Trials bind an expert model to one scene, run the
receding-horizon executor in one of the four planning modes and record whether
the goal was reached and how far the placed link ended from its mate pose.
"""

import copy
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import json5
import numpy as np
from django.conf import settings

from tamp.constants import (
    AUGMENT_EXECUTIONS,
    FAN_PATHS,
    MATE_FRAME,
    MODE_FULL,
    PLANNING_MODES,
)
from tamp.utils.cem import CemConfig, PlanningError, StartSet, optimize, sample_valid
from tamp.utils.config_schema import format_validation_errors, validate_run_config
from tamp.utils.dmp import DmpConfig, DmpError, Trajectory, is_valid
from tamp.utils.treeplan import PlanResult, TreeConfig, execute

from .demonstrations import Demonstration, DemonstrationError, demonstration_from_execution
from .expert import BoundModel, ExpertModel, SkillSettings
from .features import FeatureError
from .grounder import GroundedAction, TaskGraph, follow, ground
from .pddl_parser import Domain, PddlError, Problem, parse_domain, parse_problem
from .rendering import FanLayer
from .scene_io import block_frame, block_node, generate_scene, scene_from_dict, scene_to_dict
from .simulator import Scene, SimulationError

logger = logging.getLogger(__name__)

MODES = [mode for mode, _ in PLANNING_MODES]


class ConfigError(Exception):
    """Raised when a run configuration is unreadable or invalid."""


# Run configuration
# ---------------------------------------------------------------------------


def default_config() -> Dict[str, Any]:
    tamp = settings.TAMP
    return {
        "paths": {},
        "mode": MODE_FULL,
        "planner": {
            "samples": tamp["SAMPLES"],
            "step_size": tamp["STEP_SIZE"],
            "horizon": tamp["HORIZON"],
            "max_iterations": tamp["MAX_ITERATIONS"],
            "seed": tamp["SEED"],
            "tolerance": 1e-3,
            "noise": 0.0,
        },
        "density": {"components": tamp["GMM_COMPONENTS"], "regularization": tamp["REGULARIZATION"]},
        "dmp": {"dt": tamp["DMP_DT"], "duration": tamp["DMP_DURATION"], "n_basis": 5},
        "features": {
            "frame_types": list(tamp["FRAME_TYPES"]),
            "holding_predicate": tamp["HOLDING_PREDICATE"],
            "gripper_predicate": tamp["GRIPPER_PREDICATE"],
        },
        "prior": {"floor": tamp["PRIOR_FLOOR"], "overrides": {}},
    }


def merge_config(base: Dict[str, Any], overlay: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; `overlay` wins and None values in it are skipped."""
    merged = copy.deepcopy(base)
    for key, value in overlay.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and key != "overrides":
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


@dataclass
class RunConfig:
    data: Dict[str, Any]
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def mode(self) -> str:
        return self.data["mode"]

    @property
    def planner(self) -> Dict[str, Any]:
        return self.data["planner"]

    @property
    def seed(self) -> int:
        return int(self.planner["seed"])

    def path(self, key: str) -> Optional[Path]:
        value = self.data["paths"].get(key)
        if not value:
            return None
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    def out_dir(self) -> Path:
        return self.path("out") or Path.cwd() / "out"

    def cem_config(self) -> CemConfig:
        p = self.planner
        return CemConfig(
            samples=int(p["samples"]),
            step_size=float(p["step_size"]),
            max_iterations=int(p["max_iterations"]),
            tolerance=float(p["tolerance"]),
            floor=float(self.data["density"]["regularization"]),
            noise=float(p["noise"]),
        )

    def tree_config(self) -> TreeConfig:
        return TreeConfig(
            cem=self.cem_config(),
            horizon=int(self.planner["horizon"]),
            policy_floor=float(self.data["prior"]["floor"]),
        )

    def dmp_config(self) -> DmpConfig:
        d = self.data["dmp"]
        return DmpConfig(n_basis=int(d["n_basis"]), dt=float(d["dt"]))

    def skill_settings(self) -> SkillSettings:
        f = self.data["features"]
        return SkillSettings(
            frame_types=tuple(f["frame_types"]),
            holding_predicate=f["holding_predicate"],
            gripper_predicate=f["gripper_predicate"],
            duration=float(self.data["dmp"]["duration"]),
            dmp=self.dmp_config(),
        )

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.data)


def load_run_config(
    path=None,
    overrides: Optional[Dict[str, Any]] = None,
    required_paths: Sequence[str] = (),
) -> RunConfig:
    """
    settings.TAMP <- config file <- overrides. Relative paths in a file are
    resolved against the file's directory, paths given as overrides against
    the working directory.
    """
    data = default_config()
    if path is not None:
        path = Path(path)
        try:
            loaded = json5.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"Config file {path} does not exist") from None
        except ValueError as e:
            raise ConfigError(f"Config file {path} is malformed: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"Config file {path} must hold a JSON object")
        if isinstance(loaded.get("paths"), dict):
            loaded["paths"] = _absolute_paths(loaded["paths"], path.resolve().parent)
        data = merge_config(data, loaded)
    if overrides:
        overrides = dict(overrides)
        if isinstance(overrides.get("paths"), dict):
            overrides["paths"] = _absolute_paths(overrides["paths"], Path.cwd())
        data = merge_config(data, overrides)

    ok, errors = validate_run_config(data, required_paths)
    if not ok:
        raise ConfigError(format_validation_errors(errors))
    return RunConfig(data)


def _absolute_paths(paths: Dict[str, Any], base_dir: Path) -> Dict[str, Any]:
    resolved = {}
    for key, value in paths.items():
        if isinstance(value, str) and value and not Path(value).is_absolute():
            value = str(base_dir / value)
        resolved[key] = value
    return resolved


# Task loading
# ---------------------------------------------------------------------------


@dataclass
class Task:
    domain: Domain
    problem: Problem
    graph: TaskGraph


def load_task(domain_path, problem_path, max_states: Optional[int] = None) -> Task:
    domain = parse_domain(Path(domain_path).read_text(encoding="utf-8"))
    problem = parse_problem(Path(problem_path).read_text(encoding="utf-8"), domain)
    graph = ground(domain, problem, max_states or settings.TAMP["MAX_STATES"])
    logger.info(f"Grounded {domain.name}/{problem.name}: {len(graph.states)} states, {len(graph.edges)} actions")
    return Task(domain, problem, graph)


# Trials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlacementError:
    x: float
    y: float

    @property
    def distance(self) -> float:
        return float(np.hypot(self.x, self.y))


def placement_error(
    scene: Scene, actions: Sequence[GroundedAction], trajectories: Sequence[Trajectory]
) -> Optional[PlacementError]:
    """
    Offset of the last released object from the mate frame of the other
    object its release action names, in that frame.
    """
    for edge, trajectory in zip(reversed(actions), reversed(trajectories)):
        held = trajectory.start.attached
        if held is None or trajectory.final_state.attached is not None:
            continue
        targets = [
            name for name in edge.args
            if name != held.name and scene.has_object(name) and MATE_FRAME in scene.object(name).frames
        ]
        placed = trajectory.final_state.moved_pose(held.name)
        if not targets or placed is None:
            return None
        mate = scene.object(targets[0]).frame_pose(MATE_FRAME)
        offset = mate.relative(placed)
        return PlacementError(offset.x, offset.y)
    return None


@dataclass
class TrialOutcome:
    scene: str
    mode: str
    seed: int
    augmented: bool = False
    failed: bool = False
    reason: str = ""
    error: Optional[PlacementError] = None
    value_history: List[float] = field(default_factory=list)
    wall_time: float = 0.0
    labels: List[str] = field(default_factory=list)
    result: Optional[PlanResult] = None

    def to_row(self) -> dict:
        return {
            "scene": self.scene,
            "mode": self.mode,
            "augmented": int(self.augmented),
            "seed": self.seed,
            "failed": int(self.failed),
            "reason": self.reason,
            "error": self.error.distance if self.error else None,
            "error_x": self.error.x if self.error else None,
            "error_y": self.error.y if self.error else None,
            "actions": " | ".join(self.labels),
            "final_log_value": self.value_history[-1] if self.value_history else None,
            "wall_time": self.wall_time,
        }

    def to_payload(self) -> dict:
        """JSON-safe form for shipping results back from a worker."""
        payload = {k: v for k, v in self.to_row().items()}
        payload["value_history"] = [float(v) for v in self.value_history]
        payload["labels"] = list(self.labels)
        payload["trajectories"] = [t.to_dict() for t in self.result.trajectories] if self.result else []
        return payload

    @classmethod
    def from_payload(cls, payload: dict, scene: Scene, graph: TaskGraph) -> "TrialOutcome":
        error = None
        if payload.get("error_x") is not None:
            error = PlacementError(float(payload["error_x"]), float(payload["error_y"]))
        result = None
        if payload.get("trajectories"):
            actions = follow(graph, payload["labels"])
            trajectories = [Trajectory.from_dict(t, scene) for t in payload["trajectories"]]
            result = PlanResult(actions=actions, trajectories=trajectories, goal_reached=not payload["failed"])
        return cls(
            scene=payload["scene"],
            mode=payload["mode"],
            seed=int(payload["seed"]),
            augmented=bool(payload["augmented"]),
            failed=bool(payload["failed"]),
            reason=payload.get("reason", ""),
            error=error,
            value_history=list(payload.get("value_history", [])),
            wall_time=float(payload.get("wall_time", 0.0)),
            labels=list(payload.get("labels", [])),
            result=result,
        )


def trial_seed(base: int, scene_index: int, mode: str, round_index: int = 0) -> int:
    """Independent, reproducible stream per (scene, mode, round)."""
    sequence = np.random.SeedSequence([base, scene_index, MODES.index(mode), round_index])
    return int(sequence.generate_state(1)[0])


def check_plan(scene: Scene, result: PlanResult) -> Optional[str]:
    for label, trajectory in zip(result.labels, result.trajectories):
        verdict = is_valid(trajectory, scene)
        if not verdict:
            return f"{label}: {verdict}"
    return None


def run_trial(
    model: ExpertModel,
    task: Task,
    scene: Scene,
    mode: str,
    cfg: RunConfig,
    seed: int,
    augmented: bool = False,
) -> TrialOutcome:
    outcome = TrialOutcome(scene.name, mode, seed, augmented)
    started = time.perf_counter()
    try:
        library = BoundModel(model, task.domain, scene, cfg.skill_settings())
        result = execute(
            task.graph, scene, library, cfg.tree_config(), scene.start_state(), np.random.default_rng(seed), mode
        )
    except (PlanningError, SimulationError, DemonstrationError, FeatureError, DmpError) as e:
        logger.error(f"Trial {scene.name}/{mode} failed: {e}", exc_info=True)
        outcome.failed, outcome.reason = True, str(e)
        outcome.wall_time = time.perf_counter() - started
        return outcome

    outcome.wall_time = time.perf_counter() - started
    outcome.value_history = list(result.value_history)
    outcome.labels = result.labels
    outcome.result = result
    if result.failed or not result.goal_reached:
        outcome.failed, outcome.reason = True, result.reason or "goal not reached"
        return outcome
    invalid = check_plan(scene, result)
    if invalid is not None:
        outcome.failed, outcome.reason = True, f"invalid trajectory in plan ({invalid})"
        return outcome
    outcome.error = placement_error(scene, result.actions, result.trajectories)
    if outcome.error is None:
        outcome.failed, outcome.reason = True, "nothing was placed"
    logger.info(
        f"Trial {scene.name}/{mode}: "
        + (f"failed ({outcome.reason})" if outcome.failed else f"placed within {outcome.error.distance:.4f} m")
    )
    return outcome


# Scene suites
# ---------------------------------------------------------------------------


def scene_suite(count: int, seed: int) -> List[Scene]:
    return [generate_scene(seed + i, name=f"scene-{seed + i:03d}") for i in range(count)]


def obstacle_suite(scene: Scene, link: str = "link1", face: str = "front", node: str = "node1") -> List[Scene]:
    """The scene with the preferred grasp face blocked, and with one node occupied."""
    return [block_frame(scene, link, face), block_node(scene, node)]


# Experiment
# ---------------------------------------------------------------------------


def summarize(outcomes: Sequence[TrialOutcome], modes: Sequence[str]) -> List[dict]:
    """Failures per mode and error statistics over successful trials."""
    if not outcomes:
        return []
    rows = []
    for augmented in sorted({o.augmented for o in outcomes}):
        for mode in modes:
            trials = [o for o in outcomes if o.mode == mode and o.augmented == augmented]
            errors = np.array([o.error.distance for o in trials if o.error is not None])
            xs = np.array([abs(o.error.x) for o in trials if o.error is not None])
            ys = np.array([abs(o.error.y) for o in trials if o.error is not None])
            rows.append(
                {
                    "mode": mode,
                    "augmented": int(augmented),
                    "trials": len(trials),
                    "failures": sum(o.failed for o in trials),
                    "median_error": float(np.median(errors)) if errors.size else None,
                    "mean_error": float(errors.mean()) if errors.size else None,
                    "median_error_x": float(np.median(xs)) if xs.size else None,
                    "median_error_y": float(np.median(ys)) if ys.size else None,
                }
            )
    return rows


def select_for_augmentation(outcomes: Sequence[TrialOutcome], k: int = AUGMENT_EXECUTIONS) -> List[TrialOutcome]:
    """The k most precise successful full-mode trials."""
    successes = [
        o for o in outcomes if o.mode == MODE_FULL and not o.failed and o.result is not None and o.error is not None
    ]
    successes.sort(key=lambda o: (o.error.distance, o.scene))
    return successes[:k]


def executions_as_demos(
    chosen: Sequence[TrialOutcome], scenes: Dict[str, Scene], task: Task, cfg: RunConfig
) -> List[Demonstration]:
    f = cfg.data["features"]
    return [
        demonstration_from_execution(
            f"exec-{o.scene}-{o.seed}",
            scenes[o.scene],
            task.domain,
            task.graph,
            o.result.actions,
            o.result.trajectories,
            frame_types=f["frame_types"],
            holding_predicate=f["holding_predicate"],
        )
        for o in chosen
    ]


# Plan and fan documents
# ---------------------------------------------------------------------------


def plan_document(result: PlanResult, scene: Scene, seed: int) -> dict:
    document = result.to_dict()
    document["seed"] = seed
    document["scene"] = scene_to_dict(scene)
    document["trajectories"] = [t.to_dict() for t in result.trajectories]
    return document


def read_plan_document(data: dict, scene: Optional[Scene] = None):
    """(scene, labels, trajectories) from a plan file."""
    try:
        scene = scene or scene_from_dict(data["scene"])
        labels = [a["label"] for a in data["actions"]]
        trajectories = [Trajectory.from_dict(t, scene) for t in data.get("trajectories", [])]
    except (KeyError, TypeError, SimulationError) as e:
        raise ConfigError(f"Plan file is malformed: {e}") from e
    if len(labels) != len(trajectories):
        raise ConfigError(f"Plan file has {len(labels)} actions but {len(trajectories)} trajectories")
    return scene, labels, trajectories


def iteration_fans(
    model: ExpertModel,
    task: Task,
    scene: Scene,
    label: str,
    cfg: RunConfig,
    paths: int = FAN_PATHS,
) -> List[FanLayer]:
    """
    Optimize one action from the scene's start state and draw `paths`
    end-effector paths from the surrogate in force at each iteration.
    """
    try:
        (edge,) = follow(task.graph, [label])
    except PddlError as e:
        raise ConfigError(f"'{label}' is not applicable in the initial state: {e}") from e
    library = BoundModel(model, task.domain, scene, cfg.skill_settings())
    ctx = library.context(edge)
    start = scene.start_state()
    v0 = library.initial_surrogate(edge, start)
    cem_cfg = cfg.cem_config()
    rng = np.random.default_rng(cfg.seed)
    result = optimize(ctx, v0, start, scene, cem_cfg, rng)

    surrogates = [v0] + [r.surrogate for r in result.reports[:-1]]
    fans = []
    draw_rng = np.random.default_rng(cfg.seed + 1)
    for iteration, v in enumerate(surrogates):
        batch, _ = sample_valid(v, max(2, paths), StartSet.single(start), scene, ctx, cem_cfg, draw_rng)
        fans.append(FanLayer(iteration, [batch.ee[i, :, :2] for i in range(len(batch))]))
    return fans


def fans_document(label: str, fans: Sequence[FanLayer], scene: Scene) -> dict:
    return {
        "action": label,
        "scene": scene_to_dict(scene),
        "iterations": [{"iteration": f.iteration, "paths": [p.tolist() for p in f.paths]} for f in fans],
    }


def read_fans_document(data: dict):
    try:
        scene = scene_from_dict(data["scene"])
        fans = [
            FanLayer(int(item["iteration"]), [np.asarray(p, dtype=float) for p in item["paths"]])
            for item in data["iterations"]
        ]
    except (KeyError, TypeError, ValueError, SimulationError) as e:
        raise ConfigError(f"Fan file is malformed: {e}") from e
    return data.get("action", ""), scene, fans


def write_json(data: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path
