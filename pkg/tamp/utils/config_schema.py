"""
Schema validation for run configuration files.

Run configs are JSON objects; every section is optional and falls back to
settings.TAMP:

{
    "paths": {"domain": "...", "problem": "...", "scene": "...", "demos": "...",
              "model": "...", "out": "..."},
    "mode": "full|no-options|no-lookahead|baseline",
    "planner": {"samples": 200, "step_size": 0.5, "horizon": 5,
                "max_iterations": 15, "seed": 0, "tolerance": 0.001, "noise": 0.0},
    "density": {"components": 3, "regularization": 1e-06},
    "dmp": {"dt": 0.02, "duration": 2.0, "n_basis": 5},
    "features": {"frame_types": ["face"], "holding_predicate": "holding",
                 "gripper_predicate": "hand-occupied"},
    "prior": {"floor": 0.001, "overrides": {"initial": {"approach link1 front": 0.6}}}
}
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from tamp.constants import PLANNING_MODES


@dataclass
class ValidationError:
    """Represents a validation error."""

    path: str
    message: str


class RunConfigValidator:
    SECTIONS = {"paths", "mode", "planner", "density", "dmp", "features", "prior"}
    PATH_KEYS = {"domain", "problem", "scene", "demos", "model", "out", "executions"}
    INPUT_KEYS = {"domain", "problem", "scene"}

    # (type, lower bound, upper bound, inclusive bounds)
    PLANNER_FIELDS = {
        "samples": (int, 2, None, True),
        "step_size": (float, 0.0, 1.0, False),
        "horizon": (int, 0, None, True),
        "max_iterations": (int, 0, None, True),
        "seed": (int, 0, None, True),
        "tolerance": (float, 0.0, None, True),
        "noise": (float, 0.0, None, True),
    }
    DENSITY_FIELDS = {
        "components": (int, 1, None, True),
        "regularization": (float, 0.0, None, False),
    }
    DMP_FIELDS = {
        "dt": (float, 0.0, None, False),
        "duration": (float, 0.0, None, False),
        "n_basis": (int, 1, None, True),
    }

    def __init__(self, base_dir: Optional[Path] = None, check_files: bool = True):
        self.base_dir = base_dir
        self.check_files = check_files
        self.errors: List[ValidationError] = []

    def validate(
        self, config: Dict[str, Any], required_paths: Sequence[str] = ()
    ) -> tuple[bool, List[ValidationError]]:
        self.errors = []

        if not isinstance(config, dict):
            self.errors.append(ValidationError("", "Config must be a dictionary"))
            return False, self.errors

        for key in config:
            if key not in self.SECTIONS:
                self.errors.append(ValidationError(key, f"Unknown section. Valid: {sorted(self.SECTIONS)}"))

        self._validate_paths(config.get("paths", {}), required_paths)
        if "mode" in config:
            modes = [m for m, _ in PLANNING_MODES]
            if config["mode"] not in modes:
                self.errors.append(ValidationError("mode", f"Unknown mode '{config['mode']}'. Valid: {modes}"))
        self._validate_fields(config.get("planner", {}), "planner", self.PLANNER_FIELDS)
        self._validate_fields(config.get("density", {}), "density", self.DENSITY_FIELDS)
        self._validate_fields(config.get("dmp", {}), "dmp", self.DMP_FIELDS)
        self._validate_features(config.get("features", {}))
        self._validate_prior(config.get("prior", {}))

        return len(self.errors) == 0, self.errors

    def _resolve(self, value: str) -> Path:
        path = Path(value)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path

    def _validate_paths(self, paths: Any, required: Sequence[str]):
        if not isinstance(paths, dict):
            self.errors.append(ValidationError("paths", "paths must be a dictionary"))
            return
        for key in required:
            if not paths.get(key):
                self.errors.append(ValidationError(f"paths.{key}", f"Path '{key}' is required"))
        for key, value in paths.items():
            if key not in self.PATH_KEYS:
                self.errors.append(ValidationError(f"paths.{key}", f"Unknown path. Valid: {sorted(self.PATH_KEYS)}"))
                continue
            if not isinstance(value, str):
                self.errors.append(ValidationError(f"paths.{key}", "Path must be a string"))
                continue
            # demos, executions, model and out may be written by the command itself
            if self.check_files and key in self.INPUT_KEYS and not self._resolve(value).exists():
                self.errors.append(ValidationError(f"paths.{key}", f"'{value}' does not exist"))

    def _validate_fields(self, section: Any, name: str, fields: Dict[str, tuple]):
        if not isinstance(section, dict):
            self.errors.append(ValidationError(name, f"{name} must be a dictionary"))
            return
        for key, value in section.items():
            if key not in fields:
                self.errors.append(ValidationError(f"{name}.{key}", f"Unknown field. Valid: {sorted(fields)}"))
                continue
            kind, low, high, inclusive = fields[key]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.errors.append(ValidationError(f"{name}.{key}", "Must be a number"))
                continue
            if kind is int and int(value) != value:
                self.errors.append(ValidationError(f"{name}.{key}", "Must be an integer"))
                continue
            too_low = low is not None and (value < low if inclusive else value <= low)
            too_high = high is not None and (value > high if inclusive else value >= high)
            if too_low or too_high:
                lo = "[" if inclusive else "("
                hi = "]" if inclusive else ")"
                self.errors.append(
                    ValidationError(
                        f"{name}.{key}",
                        f"{value} is outside {lo}{low if low is not None else '-inf'}, "
                        f"{high if high is not None else 'inf'}{hi}",
                    )
                )

    def _validate_features(self, features: Any):
        if not isinstance(features, dict):
            self.errors.append(ValidationError("features", "features must be a dictionary"))
            return
        frame_types = features.get("frame_types", [])
        if not isinstance(frame_types, list) or not all(isinstance(t, str) for t in frame_types):
            self.errors.append(ValidationError("features.frame_types", "frame_types must be a list of type names"))
        for key in ("holding_predicate", "gripper_predicate"):
            if key in features and not isinstance(features[key], str):
                self.errors.append(ValidationError(f"features.{key}", f"{key} must be a predicate name"))

    def _validate_prior(self, prior: Any):
        if not isinstance(prior, dict):
            self.errors.append(ValidationError("prior", "prior must be a dictionary"))
            return
        floor = prior.get("floor", 1e-3)
        if isinstance(floor, bool) or not isinstance(floor, (int, float)) or not 0.0 <= floor < 1.0:
            self.errors.append(ValidationError("prior.floor", "floor must be a number in [0, 1)"))
        overrides = prior.get("overrides", {})
        if not isinstance(overrides, dict):
            self.errors.append(ValidationError("prior.overrides", "overrides must map states to distributions"))
            return
        for state, distribution in overrides.items():
            path = f"prior.overrides[{state!r}]"
            if not isinstance(distribution, dict) or not distribution:
                self.errors.append(ValidationError(path, "Override must map action labels to probabilities"))
                continue
            values = list(distribution.values())
            if any(isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0 for v in values):
                self.errors.append(ValidationError(path, "Probabilities must be non-negative numbers"))
            elif abs(sum(values) - 1.0) > 1e-6:
                self.errors.append(ValidationError(path, f"Probabilities sum to {sum(values):.6f}, not 1"))


def validate_run_config(
    config: Dict[str, Any],
    required_paths: Sequence[str] = (),
    base_dir: Optional[Path] = None,
    check_files: bool = True,
) -> tuple[bool, List[ValidationError]]:
    return RunConfigValidator(base_dir, check_files).validate(config, required_paths)


def format_validation_errors(errors: List[ValidationError]) -> str:
    """Formats validation errors into a human-readable string."""
    if not errors:
        return "No errors"

    lines = ["Run configuration validation errors:"]
    for error in errors:
        if error.path:
            lines.append(f"  - {error.path}: {error.message}")
        else:
            lines.append(f"  - {error.message}")
    return "\n".join(lines)
