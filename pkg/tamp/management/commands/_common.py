"""Shared arguments and error handling for the tamp management commands."""

import logging
from contextlib import contextmanager
from pathlib import Path

from django.core.management.base import CommandError

from tamp.services.demonstrations import DemonstrationError
from tamp.services.experiment import ConfigError, RunConfig, load_run_config
from tamp.services.features import FeatureError
from tamp.services.pddl_parser import PddlError
from tamp.services.simulator import SimulationError
from tamp.utils.density import DensityError
from tamp.utils.dmp import DmpError

# Exit codes
PLANNING_FAILURE = 1
INPUT_ERROR = 2

INPUT_ERRORS = (
    ConfigError,
    PddlError,
    SimulationError,
    DemonstrationError,
    FeatureError,
    DensityError,
    DmpError,
    OSError,
    ValueError,
)


def add_run_arguments(parser):
    parser.add_argument("--config", type=str, help="Run configuration file (JSON)")
    parser.add_argument("--seed", type=int, help="Random seed (overrides the config)")
    parser.add_argument("--out", type=str, help="Output directory (overrides the config)")
    parser.add_argument("--verbose", action="store_true", help="Increase logging verbosity")


def configure_logging(options):
    if options.get("verbose"):
        logging.getLogger("tamp").setLevel(logging.DEBUG)


def run_config(options, paths: dict = None, planner: dict = None, required=(), **sections) -> RunConfig:
    """Load --config and overlay the common flags plus command-specific values."""
    overrides = {
        "paths": {"out": options.get("out"), **(paths or {})},
        "planner": {"seed": options.get("seed"), **(planner or {})},
        **sections,
    }
    try:
        return load_run_config(options.get("config"), overrides, required)
    except ConfigError as e:
        raise CommandError(str(e), returncode=INPUT_ERROR) from e


@contextmanager
def input_errors(what: str):
    """Turn bad-input exceptions into CommandError with the input-error exit code."""
    try:
        yield
    except CommandError:
        raise
    except INPUT_ERRORS as e:
        raise CommandError(f"{what}: {e}", returncode=INPUT_ERROR) from e


def require_file(path, what: str) -> Path:
    if path is None:
        raise CommandError(f"No {what} given", returncode=INPUT_ERROR)
    path = Path(path)
    if not path.exists():
        raise CommandError(f"{what.capitalize()} {path} does not exist", returncode=INPUT_ERROR)
    return path
