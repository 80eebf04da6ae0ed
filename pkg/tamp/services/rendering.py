"""
SVG and CSV output.

Figures are drawn with matplotlib on the Agg backend and saved as SVG with a
fixed hash salt and no date metadata, so a seeded run writes identical files.
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle, Rectangle  # noqa: E402

from tamp.utils.colors import action_color, gradient  # noqa: E402
from tamp.utils.dmp import Trajectory  # noqa: E402

from .simulator import CircleObstacle, RectObstacle, Scene, fk_batch  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "lfd-tamp"

FAN_START_COLOR = "#E0E0E0"
FAN_END_COLOR = "#1F3A93"
OBJECT_COLORS = {"link": "#8C564B", "node": "#17BECF"}


@dataclass
class PathLayer:
    """One polyline of end-effector positions with a legend label."""

    label: str
    points: np.ndarray
    color: str
    width: float = 1.5
    alpha: float = 1.0


@dataclass
class FanLayer:
    """End-effector paths sampled at one optimizer iteration."""

    iteration: int
    paths: List[np.ndarray] = field(default_factory=list)


# Figures
# ---------------------------------------------------------------------------


def _draw_scene(ax, scene: Scene):
    xmin, ymin, xmax, ymax = scene.bounds
    ax.add_patch(Rectangle((xmin, ymin), xmax - xmin, ymax - ymin, fill=False, edgecolor="#BBBBBB", lw=0.8))
    for obstacle in scene.obstacles:
        if isinstance(obstacle, CircleObstacle):
            ax.add_patch(Circle((obstacle.x, obstacle.y), obstacle.radius, color="#444444", alpha=0.8))
        elif isinstance(obstacle, RectObstacle):
            ax.add_patch(
                Rectangle(
                    (obstacle.xmin, obstacle.ymin),
                    obstacle.xmax - obstacle.xmin,
                    obstacle.ymax - obstacle.ymin,
                    color="#444444",
                    alpha=0.8,
                )
            )
    for obj in scene.objects:
        color = OBJECT_COLORS.get(obj.category, "#7F7F7F")
        ax.add_patch(Circle((obj.pose.x, obj.pose.y), obj.radius, color=color, alpha=0.6))
        ax.annotate(obj.name, (obj.pose.x, obj.pose.y), fontsize=6, ha="center", va="center")
        for frame_name in sorted(obj.frames):
            frame = obj.frame_pose(frame_name)
            ax.plot(frame.x, frame.y, marker=".", color=color, ms=3)
            ax.arrow(frame.x, frame.y, 0.03 * np.cos(frame.theta), 0.03 * np.sin(frame.theta),
                     width=0.002, color=color, length_includes_head=True)


def _draw_arm(ax, scene: Scene, q: Sequence[float], color: str = "#333333", alpha: float = 1.0):
    _, points = fk_batch(scene.arm, np.asarray(q, dtype=float))
    ax.plot(points[:, 0], points[:, 1], "-o", color=color, alpha=alpha, lw=2, ms=3)


def _figure(scene: Scene, title: Optional[str]):
    fig, ax = plt.subplots(figsize=(6, 6))
    _draw_scene(ax, scene)
    _draw_arm(ax, scene, scene.home, color="#999999", alpha=0.6)
    xmin, ymin, xmax, ymax = scene.bounds
    ax.set_xlim(xmin, xmax)
    ax.set_ylim(ymin, ymax)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    return fig, ax


def _to_svg(fig) -> str:
    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buffer.getvalue()


def trajectory_layers(labels: Sequence[str], trajectories: Sequence[Trajectory]) -> List[PathLayer]:
    return [
        PathLayer(label, trajectory.ee[:, :2], action_color(label.split()[0]))
        for label, trajectory in zip(labels, trajectories)
    ]


def render_scene(
    scene: Scene,
    layers: Iterable[PathLayer] = (),
    final_q: Optional[Sequence[float]] = None,
    title: Optional[str] = None,
) -> str:
    fig, ax = _figure(scene, title)
    seen = set()
    for layer in layers:
        skill = layer.label.split()[0] if layer.label else ""
        ax.plot(
            layer.points[:, 0],
            layer.points[:, 1],
            color=layer.color,
            lw=layer.width,
            alpha=layer.alpha,
            label=skill if skill and skill not in seen else None,
        )
        if skill:
            seen.add(skill)
    if final_q is not None:
        _draw_arm(ax, scene, final_q)
    if seen:
        ax.legend(loc="upper right", fontsize=7)
    return _to_svg(fig)


def render_plan(
    scene: Scene, labels: Sequence[str], trajectories: Sequence[Trajectory], title: Optional[str] = None
) -> str:
    final_q = trajectories[-1].q[-1] if trajectories else None
    return render_scene(scene, trajectory_layers(labels, trajectories), final_q, title or scene.name)


def render_fans(scene: Scene, fans: Sequence[FanLayer], title: Optional[str] = None) -> str:
    """Samples of later iterations are drawn darker and on top."""
    fig, ax = _figure(scene, title)
    colors = gradient(FAN_START_COLOR, FAN_END_COLOR, max(1, len(fans)))
    for fan, color in zip(fans, colors):
        for k, path in enumerate(fan.paths):
            ax.plot(path[:, 0], path[:, 1], color=color, lw=0.6, alpha=0.7,
                    label=f"iteration {fan.iteration}" if k == 0 else None)
    if fans:
        ax.legend(loc="upper right", fontsize=6)
    return _to_svg(fig)


def render_values(history: Sequence[float], title: str = "log V(w0, s0)") -> str:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(range(len(history)), history, "-o", ms=3, color=FAN_END_COLOR)
    ax.set_xlabel("iteration")
    ax.set_ylabel(title)
    fig.tight_layout()
    return _to_svg(fig)


def write_svg(svg: str, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg, encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


# CSV
# ---------------------------------------------------------------------------


def rows_to_csv(rows: Sequence[dict], fieldnames: Optional[Sequence[str]] = None) -> str:
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(fieldnames), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(row.get(k)) for k in fieldnames})
    return buffer.getvalue()


def _cell(value):
    if isinstance(value, float):
        return f"{value:.9g}"
    if value is None:
        return ""
    return value


def write_csv(rows: Sequence[dict], path, fieldnames: Optional[Sequence[str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows, fieldnames), encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def write_trajectory_csvs(labels: Sequence[str], trajectories: Sequence[Trajectory], directory) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for i, (label, trajectory) in enumerate(zip(labels, trajectories)):
        path = directory / f"{i:02d}_{label.replace(' ', '_')}.csv"
        path.write_text(trajectory.to_csv(), encoding="utf-8")
        written.append(path)
    logger.info(f"Wrote {len(written)} trajectory CSVs to {directory}")
    return written


def read_csv(path) -> List[dict]:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))
