"""
Services layer for the planner.

This package contains:
- pddl_parser.py: PDDL domain/problem parsing
- grounder.py: Grounding into the task graph
- simulator.py: Planar arm kinematics, collisions and object attachment
- scene_io.py: Scene files and the seeded scene generator
- features.py: Object-relative feature traces
- demonstrations.py: Demonstration files and the scripted demonstrator
- expert.py: Expert model fitting, augmentation and binding
- rendering.py: SVG and CSV output
- experiment.py: Run configuration, trials and the experiment harness
"""

from .grounder import GroundedAction, TaskGraph, ground
from .pddl_parser import PddlError, parse_domain, parse_problem
from .simulator import Scene, SimulationError

__all__ = [
    "GroundedAction",
    "TaskGraph",
    "ground",
    "PddlError",
    "parse_domain",
    "parse_problem",
    "Scene",
    "SimulationError",
]
