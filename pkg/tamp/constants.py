# Planner constants
import math
from typing import Dict, List, Tuple

# Planning modes for the experiment harness
MODE_FULL = "full"
MODE_NO_OPTIONS = "no-options"
MODE_NO_LOOKAHEAD = "no-lookahead"
MODE_BASELINE = "baseline"

PLANNING_MODES: List[Tuple[str, str]] = [
    (MODE_FULL, "Options / Lookahead"),
    (MODE_NO_LOOKAHEAD, "Options / No Lookahead"),
    (MODE_NO_OPTIONS, "No Options / Lookahead"),
    (MODE_BASELINE, "No Options / No Lookahead"),
]

# Horizon used by the "no lookahead" ablation
NO_LOOKAHEAD_HORIZON: int = 1

# Draws allowed per sampling call, as a multiple of M
REJECTION_BUDGET_FACTOR: int = 50

# Relative change of mean expert log-likelihood that counts as converged
CEM_CONVERGENCE_TOLERANCE: float = 1e-3

# Weighted EM stopping threshold on the weighted log-likelihood change
EM_TOLERANCE: float = 1e-8
EM_MAX_ITERATIONS: int = 100

# Surrogate v0 spread (standard deviations of the broad diagonal)
V0_WEIGHT_STD: float = 5.0
V0_GOAL_POSITION_STD: float = 0.01  # meters
V0_GOAL_ANGLE_STD: float = 0.05  # radians

# DMP defaults
DMP_BASIS_COUNT: int = 5
DMP_SPRING: float = 150.0
DMP_PHASE_DECAY: float = 6.0

# Simulator defaults
DEFAULT_LINK_LENGTHS: Tuple[float, ...] = (0.4, 0.35, 0.25)
DEFAULT_LINK_RADIUS: float = 0.02
DEFAULT_JOINT_LIMIT: float = 2.9  # symmetric, radians
IK_POSITION_TOLERANCE: float = 1e-6
IK_ANGLE_TOLERANCE: float = 1e-6
IK_RESTARTS: int = 16
IK_MAX_STEPS: int = 500
IK_DAMPING: float = 0.05
GRASP_POSITION_TOLERANCE: float = 0.02  # meters
GRASP_ANGLE_TOLERANCE: float = 0.2  # radians

# Scene geometry for the structure assembly task
LINK_RADIUS: float = 0.03
NODE_RADIUS: float = 0.03
GRASP_STANDOFF: float = 0.07
MATE_OFFSET: float = 0.08
ALIGN_OFFSET: float = 0.10  # extra distance back from the mate before placing

# Named frames declared by each object category, in the object's frame (x, y, theta).
# Side faces sit on the rear diagonals of the link, facing its center.
SIDE_GRASP_ANGLE: float = 0.7853981633974483
LINK_FRAMES: Dict[str, Tuple[float, float, float]] = {
    "front": (-GRASP_STANDOFF, 0.0, 0.0),
    "left": (
        -GRASP_STANDOFF * math.cos(SIDE_GRASP_ANGLE),
        GRASP_STANDOFF * math.sin(SIDE_GRASP_ANGLE),
        -SIDE_GRASP_ANGLE,
    ),
    "right": (
        -GRASP_STANDOFF * math.cos(SIDE_GRASP_ANGLE),
        -GRASP_STANDOFF * math.sin(SIDE_GRASP_ANGLE),
        SIDE_GRASP_ANGLE,
    ),
}
NODE_FRAMES: Dict[str, Tuple[float, float, float]] = {
    "mate": (-MATE_OFFSET, 0.0, 0.0),
}

# Scene generator ranges (meters / radians, base at the origin facing +x)
HOME_POSE: Tuple[float, float, float] = (0.1, 0.35, 1.5707963267948966)
HOME_SEED: Tuple[float, ...] = (2.0, -2.5, 0.0)
LINK_DISTANCE_RANGE: Tuple[float, float] = (0.45, 0.55)
LINK_BEARING_RANGE: Tuple[float, float] = (-0.3, 0.3)
LINK_HEADING_JITTER: float = 0.2
NODE_DISTANCE_RANGE: Tuple[float, float] = (0.65, 0.70)
NODE_SPREAD_RANGE: Tuple[float, float] = (0.5, 0.8)
NODE_HEADING_JITTER: float = 0.15
WORKSPACE_BOUNDS: Tuple[float, float, float, float] = (-0.4, -0.9, 1.0, 0.9)
GENERATOR_ATTEMPTS: int = 100

# Obstacle suite
BLOCKER_RADIUS: float = 0.05
BLOCKER_DISTANCE: float = 0.12  # behind a grasp frame, along its approach axis

# Frame on a node that a placed link should coincide with
MATE_FRAME: str = "mate"

# Experiment harness
DEFAULT_TRIALS: int = 10
AUGMENT_EXECUTIONS: int = 3
REDUCED_SAMPLES: int = 60  # fast fallback for the full seeded suite
FAN_PATHS: int = 20  # sample paths drawn per iteration in fan figures
