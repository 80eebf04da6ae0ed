"""
Scene files and the seeded scene generator.

Scene files are JSON (read leniently with json5, so comments and trailing
commas are fine):

    {
      "name": "canonical",
      "arm": {"base": [0, 0, 0], "lengths": [0.4, 0.35, 0.25],
              "radii": [0.02, 0.02, 0.02], "limits": [[-2.9, 2.9], ...]},
      "home": [q1, q2, q3],
      "bounds": [xmin, ymin, xmax, ymax],
      "objects": [{"name": "link1", "category": "link", "pose": [x, y, theta],
                   "radius": 0.03, "frames": {"front": [dx, dy, dtheta], ...}}],
      "obstacles": [{"name": "post", "shape": "circle", "center": [x, y], "radius": r},
                    {"name": "wall", "shape": "rect", "min": [x, y], "max": [x, y]}]
    }

Objects without a "frames" entry get the default frames of their category.
"""

import json
import logging
from pathlib import Path
from typing import Callable, List, Optional

import json5
import numpy as np

from tamp.constants import (
    BLOCKER_DISTANCE,
    BLOCKER_RADIUS,
    GENERATOR_ATTEMPTS,
    HOME_POSE,
    HOME_SEED,
    LINK_BEARING_RANGE,
    LINK_DISTANCE_RANGE,
    LINK_FRAMES,
    LINK_HEADING_JITTER,
    LINK_RADIUS,
    NODE_DISTANCE_RANGE,
    NODE_FRAMES,
    NODE_HEADING_JITTER,
    NODE_RADIUS,
    NODE_SPREAD_RANGE,
    WORKSPACE_BOUNDS,
)
from tamp.utils.geometry import PlanarPose

from .simulator import (
    ArmModel,
    CircleObstacle,
    RectObstacle,
    Scene,
    SceneObject,
    SimulationError,
    check_valid,
    inverse_kinematics,
)

logger = logging.getLogger(__name__)

CATEGORY_FRAMES = {"link": LINK_FRAMES, "node": NODE_FRAMES}


def default_frames(category: str) -> dict:
    return {name: PlanarPose(*f) for name, f in CATEGORY_FRAMES.get(category, {}).items()}


def scene_from_dict(data: dict) -> Scene:
    try:
        arm_data = data.get("arm", {})
        arm_defaults = ArmModel()
        arm = ArmModel(
            base=PlanarPose.from_array(arm_data.get("base", [0.0, 0.0, 0.0])),
            lengths=tuple(arm_data.get("lengths", arm_defaults.lengths)),
            radii=tuple(arm_data.get("radii", arm_defaults.radii)),
            limits=tuple(tuple(l) for l in arm_data.get("limits", arm_defaults.limits)),
        )

        objects = []
        for item in data.get("objects", []):
            category = item.get("category", "other")
            frames = item.get("frames")
            objects.append(
                SceneObject(
                    name=item["name"],
                    pose=PlanarPose.from_array(item["pose"]),
                    category=category,
                    radius=float(item.get("radius", LINK_RADIUS)),
                    frames=(
                        {k: PlanarPose.from_array(v) for k, v in frames.items()}
                        if frames is not None
                        else default_frames(category)
                    ),
                )
            )

        obstacles = []
        for i, item in enumerate(data.get("obstacles", [])):
            name = item.get("name", f"obstacle-{i}")
            shape = item.get("shape", "circle")
            if shape == "circle":
                cx, cy = item["center"]
                obstacles.append(CircleObstacle(name, float(cx), float(cy), float(item["radius"])))
            elif shape == "rect":
                (x0, y0), (x1, y1) = item["min"], item["max"]
                obstacles.append(RectObstacle(name, float(x0), float(y0), float(x1), float(y1)))
            else:
                raise SimulationError(f"Unknown obstacle shape '{shape}'")

        return Scene(
            name=data.get("name", "scene"),
            arm=arm,
            objects=tuple(objects),
            obstacles=tuple(obstacles),
            bounds=tuple(data.get("bounds", WORKSPACE_BOUNDS)),
            home=tuple(data.get("home", ())),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SimulationError(f"Malformed scene description: {e}") from e


def scene_to_dict(scene: Scene) -> dict:
    obstacles = []
    for o in scene.obstacles:
        if isinstance(o, CircleObstacle):
            obstacles.append({"name": o.name, "shape": "circle", "center": [o.x, o.y], "radius": o.radius})
        else:
            obstacles.append({"name": o.name, "shape": "rect", "min": [o.xmin, o.ymin], "max": [o.xmax, o.ymax]})
    return {
        "name": scene.name,
        "arm": {
            "base": scene.arm.base.as_list(),
            "lengths": list(scene.arm.lengths),
            "radii": list(scene.arm.radii),
            "limits": [list(l) for l in scene.arm.limits],
        },
        "home": list(scene.home),
        "bounds": list(scene.bounds),
        "objects": [
            {
                "name": o.name,
                "category": o.category,
                "pose": o.pose.as_list(),
                "radius": o.radius,
                "frames": {k: v.as_list() for k, v in sorted(o.frames.items())},
            }
            for o in scene.objects
        ],
        "obstacles": obstacles,
    }


def load_scene(path) -> Scene:
    path = Path(path)
    try:
        data = json5.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise SimulationError(f"Cannot read scene file {path}: {e}") from e
    except ValueError as e:
        raise SimulationError(f"Scene file {path} is not valid JSON: {e}") from e
    return scene_from_dict(data)


def save_scene(scene: Scene, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n", encoding="utf-8")
    return path


def load_scenes(paths) -> List[Scene]:
    """Load scene files; directories contribute every *.json inside, sorted."""
    scenes = []
    for path in paths:
        path = Path(path)
        if path.is_dir():
            scenes.extend(load_scene(p) for p in sorted(path.glob("*.json")))
        else:
            scenes.append(load_scene(path))
    return scenes


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------


def _polar(distance: float, bearing: float, heading: float) -> PlanarPose:
    return PlanarPose(distance * np.cos(bearing), distance * np.sin(bearing), heading)


def home_configuration(arm: ArmModel) -> tuple:
    q = inverse_kinematics(arm, PlanarPose(*HOME_POSE), np.array(HOME_SEED[: arm.n_joints]))
    return tuple(float(v) for v in q)


def sample_scene(rng: np.random.Generator, name: str, arm: Optional[ArmModel] = None) -> Scene:
    """One link and two nodes around the arm base; the link faces away from the base."""
    arm = arm or ArmModel()
    bearing = rng.uniform(*LINK_BEARING_RANGE)
    link = SceneObject(
        "link1",
        _polar(rng.uniform(*LINK_DISTANCE_RANGE), bearing, bearing + rng.uniform(-1, 1) * LINK_HEADING_JITTER),
        "link",
        LINK_RADIUS,
        default_frames("link"),
    )
    nodes = []
    for i, side in enumerate((1.0, -1.0), start=1):
        node_bearing = bearing + side * rng.uniform(*NODE_SPREAD_RANGE)
        nodes.append(
            SceneObject(
                f"node{i}",
                _polar(
                    rng.uniform(*NODE_DISTANCE_RANGE),
                    node_bearing,
                    node_bearing + rng.uniform(-1, 1) * NODE_HEADING_JITTER,
                ),
                "node",
                NODE_RADIUS,
                default_frames("node"),
            )
        )
    return Scene(
        name=name,
        arm=arm,
        objects=(link, *nodes),
        bounds=WORKSPACE_BOUNDS,
        home=home_configuration(arm),
    )


def generate_scene(
    seed: int,
    name: Optional[str] = None,
    feasible: Optional[Callable[[Scene], bool]] = None,
    attempts: int = GENERATOR_ATTEMPTS,
) -> Scene:
    """
    Rejection-sample a scene whose start state is valid and which passes the
    optional `feasible` check (typically a scripted demonstration).
    """
    rng = np.random.default_rng(seed)
    name = name or f"scene-{seed:03d}"
    for attempt in range(attempts):
        scene = sample_scene(rng, name)
        if not check_valid(scene, scene.start_state()):
            continue
        if feasible is not None and not feasible(scene):
            logger.debug(f"Generated scene {name} attempt {attempt} is infeasible, resampling")
            continue
        return scene
    raise SimulationError(f"No feasible scene found for seed {seed} after {attempts} attempts")


def block_frame(scene: Scene, obj_name: str, frame: str, name: Optional[str] = None) -> Scene:
    """Place a post in the approach corridor of one named frame of an object."""
    obj = scene.object(obj_name)
    corridor = obj.frame_pose(frame).compose(PlanarPose(-BLOCKER_DISTANCE, 0.0, 0.0))
    blocker = CircleObstacle(f"block-{obj_name}-{frame}", corridor.x, corridor.y, BLOCKER_RADIUS)
    return scene.with_obstacles(blocker, name=name or f"{scene.name}-block-{obj_name}-{frame}")


def block_node(scene: Scene, node_name: str, name: Optional[str] = None) -> Scene:
    """Occupy a node's mate position so nothing can be placed there."""
    node = scene.object(node_name)
    mate = node.frame_pose("mate")
    blocker = CircleObstacle(f"block-{node_name}", mate.x, mate.y, NODE_RADIUS)
    return scene.with_obstacles(blocker, name=name or f"{scene.name}-block-{node_name}")
