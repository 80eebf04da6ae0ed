"""
Recursive sampling over the symbolic action tree.

Every node of the tree is a sequence of grounded actions from the planning
root. A node owns a trajectory surrogate π(ξ|v) for its last action and a
sampling policy π(a|w) over the actions leaving the state it reaches. One
planning iteration:

  - samples M valid trajectories for every root action;
  - for each action below the horizon, turns the final states of its samples
    into the start set of its children, weighted p(s0) * z̄, and splits M
    among the children by π(a|w);
  - computes per-start values bottom up, with V(w, s) = Σ_a p_d(a|w) Q(w, s, a)
    and V = 1 at goal states and at the horizon (0 at dead ends);
  - weighs each trajectory by its summed expert likelihood times the value of
    where it ends, and updates every surrogate and policy with the step size.

Everything is carried in log space. A plan is read off by following argmax
π(a|w) from the root and then picking, among the last iteration's samples, the
highest-likelihood chain in which every trajectory starts where its parent
ended.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Set, Tuple

import numpy as np
from scipy.special import logsumexp

from tamp.constants import (
    MODE_BASELINE,
    MODE_FULL,
    MODE_NO_LOOKAHEAD,
    MODE_NO_OPTIONS,
    NO_LOOKAHEAD_HORIZON,
)
from tamp.services.grounder import GroundedAction, TaskGraph
from tamp.services.simulator import RobotState, Scene
from tamp.utils.cem import (
    LOG_TINY,
    ActionContext,
    CemConfig,
    PlanningError,
    StartSet,
    converged,
    evaluate,
    mean_log_likelihood,
    sample_valid,
    update,
    weigh,
)
from tamp.utils.density import Density
from tamp.utils.dmp import Trajectory, TrajectoryBatch

logger = logging.getLogger(__name__)

Path = Tuple[int, ...]


# ---------------------------------------------------------------------------
# Action prior p_d(a|w)
# ---------------------------------------------------------------------------


@dataclass
class ActionPrior:
    """Demonstrated action frequencies per predicate state, keyed by state key and action label."""

    counts: Dict[str, Dict[str, int]] = field(default_factory=dict)
    overrides: Dict[str, Dict[str, float]] = field(default_factory=dict)
    floor: float = 1e-3

    def observe(self, state_key: str, label: str, count: int = 1):
        bucket = self.counts.setdefault(state_key, {})
        bucket[label] = bucket.get(label, 0) + count

    def empirical(self, state_key: str) -> Dict[str, float]:
        bucket = self.counts.get(state_key, {})
        total = sum(bucket.values())
        return {label: n / total for label, n in sorted(bucket.items())} if total else {}

    def distribution(self, state_key: str, labels: Sequence[str]) -> Dict[str, float]:
        """p_d over `labels`, floored at `floor` and renormalized."""
        if not labels:
            return {}
        base = self.overrides.get(state_key) or self.empirical(state_key)
        if not base:
            logger.warning(
                f"No demonstrations from state [{state_key}]; using a uniform prior over {len(labels)} actions"
            )
            return {label: 1.0 / len(labels) for label in labels}
        p = np.array([max(float(base.get(label, 0.0)), 0.0) for label in labels])
        if p.sum() > 0:
            p = p / p.sum()
        p = np.maximum(p, self.floor)
        p = p / p.sum()
        return dict(zip(labels, p.tolist()))

    def to_dict(self) -> dict:
        return {
            "floor": self.floor,
            "counts": {k: dict(sorted(v.items())) for k, v in sorted(self.counts.items())},
            "overrides": {k: dict(sorted(v.items())) for k, v in sorted(self.overrides.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ActionPrior":
        return cls(
            counts={k: dict(v) for k, v in data.get("counts", {}).items()},
            overrides={k: dict(v) for k, v in data.get("overrides", {}).items()},
            floor=float(data.get("floor", 1e-3)),
        )


def fit_action_prior(
    observations: Iterable[Tuple[str, str]],
    floor: float = 1e-3,
    overrides: Optional[Dict[str, Dict[str, float]]] = None,
) -> ActionPrior:
    """Count (state key, action label) pairs from labeled demonstration segments."""
    prior = ActionPrior(overrides=dict(overrides or {}), floor=floor)
    for state_key, label in observations:
        prior.observe(state_key, label)
    return prior


# ---------------------------------------------------------------------------
# Allocation
# ---------------------------------------------------------------------------


def allocate(policy: Sequence[float], total: int, epsilon: float = 1e-9) -> List[int]:
    """
    Largest-remainder split of `total` samples by `policy`; every action with
    probability above `epsilon` gets at least one sample.
    """
    p = np.asarray(policy, dtype=float)
    if p.size == 0:
        return []
    raw = p / p.sum() * total
    counts = np.floor(raw).astype(int)
    missing = total - int(counts.sum())
    if missing > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:missing]] += 1
    counts[(p > epsilon) & (counts == 0)] = 1
    return counts.tolist()


# ---------------------------------------------------------------------------
# Planner state
# ---------------------------------------------------------------------------


class SkillLibrary(Protocol):
    def context(self, edge: GroundedAction) -> ActionContext: ...

    def initial_surrogate(self, edge: GroundedAction, start: RobotState) -> Density: ...

    def prior(self, state_key: str, labels: Sequence[str]) -> Dict[str, float]: ...


@dataclass(frozen=True)
class TreeConfig:
    cem: CemConfig = field(default_factory=CemConfig)
    horizon: int = 5
    policy_floor: float = 1e-3
    allocation_epsilon: float = 1e-9
    max_replans: int = 20

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("Horizon cannot be negative")


@dataclass(eq=False)
class TreeNode:
    path: Path
    edge: Optional[GroundedAction]
    surrogate: Optional[Density] = None
    policy: Dict[int, float] = field(default_factory=dict)
    batch: Optional[TrajectoryBatch] = None
    log_likelihood: Optional[np.ndarray] = None
    step_log_likelihood: Optional[np.ndarray] = None
    iteration: int = -1
    exhausted: bool = False
    best: Optional[Trajectory] = None
    best_log_weight: float = -np.inf


@dataclass
class QVEntry:
    prior: Dict[int, float]
    log_q: Dict[int, np.ndarray]
    log_v: np.ndarray


@dataclass
class QVTable:
    """Q and V per tree node for one iteration, indexed by start position."""

    entries: Dict[Path, QVEntry] = field(default_factory=dict)

    def record(self, path: Path, prior: Dict[int, float], log_q: Dict[int, np.ndarray]) -> np.ndarray:
        stacked = np.stack([np.log(prior[a]) + log_q[a] for a in prior])
        log_v = logsumexp(stacked, axis=0)
        self.entries[path] = QVEntry(dict(prior), {a: q.copy() for a, q in log_q.items()}, log_v)
        return log_v

    def values(self, path: Path) -> np.ndarray:
        return np.exp(self.entries[path].log_v)

    def identity_error(self) -> float:
        """Largest gap between stored V and Σ p_d Q recomputed from stored Q."""
        worst = 0.0
        for entry in self.entries.values():
            recomputed = sum(p * np.exp(entry.log_q[a]) for a, p in entry.prior.items())
            worst = max(worst, float(np.max(np.abs(np.exp(entry.log_v) - recomputed))))
        return worst


@dataclass
class IterationStats:
    iteration: int
    log_value: float
    mean_log_likelihood: float = -np.inf
    allocated: int = 0
    accepted: int = 0
    draws: int = 0
    exhausted: int = 0

    def to_row(self) -> dict:
        return {
            "iteration": self.iteration,
            "log_value": self.log_value,
            "mean_log_likelihood": self.mean_log_likelihood,
            "allocated": self.allocated,
            "accepted": self.accepted,
            "draws": self.draws,
            "exhausted": self.exhausted,
        }


@dataclass
class PlanResult:
    actions: List[GroundedAction] = field(default_factory=list)
    trajectories: List[Trajectory] = field(default_factory=list)
    value_history: List[float] = field(default_factory=list)
    failed: bool = False
    reason: str = ""
    goal_reached: bool = False
    stats: List[IterationStats] = field(default_factory=list)
    root_policy: Dict[str, float] = field(default_factory=dict)
    surrogates: List[Density] = field(default_factory=list)
    replans: int = 0

    @property
    def labels(self) -> List[str]:
        return [a.label for a in self.actions]

    @property
    def final_state(self) -> Optional[RobotState]:
        return self.trajectories[-1].final_state if self.trajectories else None

    def to_dict(self) -> dict:
        return {
            "failed": self.failed,
            "reason": self.reason,
            "goal_reached": self.goal_reached,
            "actions": [
                {"id": a.id, "label": a.label, "source": a.source, "target": a.target}
                for a in self.actions
            ],
            "params": [t.vector.tolist() if t.vector is not None else None for t in self.trajectories],
            "surrogates": [s.to_dict() for s in self.surrogates],
            "value_history": [float(v) for v in self.value_history],
            "root_policy": self.root_policy,
            "iterations": [s.to_row() for s in self.stats],
            "replans": self.replans,
        }


# ---------------------------------------------------------------------------
# Planner
# ---------------------------------------------------------------------------


class TreePlanner:
    def __init__(
        self,
        graph: TaskGraph,
        scene: Scene,
        library: SkillLibrary,
        cfg: TreeConfig,
        allowed: Optional[Set[int]] = None,
    ):
        self.graph = graph
        self.scene = scene
        self.library = library
        self.cfg = cfg
        self.allowed = allowed
        self.nodes: Dict[Path, TreeNode] = {(): TreeNode((), None)}
        self.table = QVTable()
        self.iteration = -1
        self._stats: Optional[IterationStats] = None
        self._contexts: Dict[int, ActionContext] = {}

    # -- graph helpers -----------------------------------------------------

    def actions(self, state_id: int) -> List[GroundedAction]:
        edges = self.graph.actions_from(state_id)
        if self.allowed is not None:
            edges = [e for e in edges if e.id in self.allowed]
        return edges

    def context(self, edge: GroundedAction) -> ActionContext:
        if edge.id not in self._contexts:
            self._contexts[edge.id] = self.library.context(edge)
        return self._contexts[edge.id]

    def prior(self, state_id: int, edges: Sequence[GroundedAction]) -> Dict[int, float]:
        by_label = self.library.prior(self.graph.states[state_id].key, [e.label for e in edges])
        return {e.id: by_label[e.label] for e in edges}

    def node(self, path: Path, edge: GroundedAction, starts: StartSet) -> TreeNode:
        node = self.nodes.get(path)
        if node is None:
            seed = starts.states[int(np.argmax(starts.log_weights))]
            node = TreeNode(path, edge, surrogate=self.library.initial_surrogate(edge, seed))
            self.nodes[path] = node
        return node

    def policy(self, node: TreeNode, edges: Sequence[GroundedAction]) -> Dict[int, float]:
        if set(node.policy) != {e.id for e in edges}:
            node.policy = {e.id: 1.0 / len(edges) for e in edges}
        return node.policy

    def update_policy(self, node: TreeNode, log_target: Dict[int, float]):
        ids = list(node.policy)
        current = np.array([node.policy[a] for a in ids])
        lt = np.array([log_target.get(a, -np.inf) for a in ids])
        if np.any(np.isfinite(lt)):
            target = np.exp(lt - np.max(lt))
            target /= target.sum()
        else:
            target = np.zeros(len(ids))
        target = np.maximum(target, self.cfg.policy_floor)
        target /= target.sum()
        alpha = self.cfg.cem.step_size
        blended = (1 - alpha) * current + alpha * target
        blended /= blended.sum()
        node.policy = dict(zip(ids, blended.tolist()))

    # -- recursion ---------------------------------------------------------

    def sample_recursive(
        self,
        path: Path,
        edge: GroundedAction,
        starts: StartSet,
        horizon: int,
        count: int,
        rng: np.random.Generator,
    ) -> Tuple[np.ndarray, float]:
        """
        Sample `count` trajectories of `edge` from `starts` and recurse below.

        Returns log Q for every entry of `starts` (starts nobody drew get the
        action's mean) and log Σ_j z_j over the drawn trajectories.
        """
        ctx = self.context(edge)
        node = self.node(path, edge, starts)
        stats = self._stats
        stats.allocated += count
        try:
            batch, rejections = sample_valid(node.surrogate, count, starts, self.scene, ctx, self.cfg.cem, rng)
        except PlanningError as e:
            logger.debug(f"[{' > '.join(self.graph.edges[a].label for a in path)}] no samples: {e}")
            node.exhausted = True
            stats.exhausted += 1
            stats.draws += getattr(e, "draws", 0)
            return np.full(len(starts), -np.inf), -np.inf
        node.exhausted = False
        stats.accepted += count
        stats.draws += count + rejections

        log_p = evaluate(batch, self.scene, ctx)
        log_s = logsumexp(log_p, axis=1)
        log_v = self._downstream(node, batch, starts, log_s, horizon, count, rng)
        log_z = log_s + log_v

        node.batch, node.log_likelihood, node.iteration = batch, log_s, self.iteration
        node.step_log_likelihood = log_p
        j = int(np.argmax(log_z))
        if log_z[j] > node.best_log_weight or node.best is None:
            node.best, node.best_log_weight = batch.trajectory(j), float(log_z[j])

        if self.cfg.cem.max_iterations > 0:
            node.surrogate = update(
                node.surrogate, weigh(log_p, batch.vectors, log_v), self.cfg.cem.step_size, self.cfg.cem.floor
            )

        log_total = float(logsumexp(log_z))
        overall = log_total - np.log(count)
        log_q = np.full(len(starts), overall)
        for k in np.unique(batch.start_index):
            mine = batch.start_index == k
            log_q[k] = logsumexp(log_z[mine]) - np.log(mine.sum())
        return log_q, log_total

    def _downstream(
        self,
        node: TreeNode,
        batch: TrajectoryBatch,
        starts: StartSet,
        log_s: np.ndarray,
        horizon: int,
        count: int,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """log V at the final state of every sampled trajectory."""
        target = node.edge.target
        if self.graph.is_goal(target) or horizon == 0:
            return np.zeros(count)
        children = self.actions(target)
        if not children:
            return np.full(count, -np.inf)

        with np.errstate(divide="ignore"):
            log_start = np.log(starts.probabilities)[batch.start_index]
        if np.any(np.isfinite(log_s)):
            log_s_bar = log_s - logsumexp(log_s)
        else:
            log_s_bar = np.full(count, -np.log(count))
        child_starts = StartSet(tuple(batch.final_states), log_start + log_s_bar)

        policy = self.policy(node, children)
        prior = self.prior(target, children)
        counts = allocate(
            [policy[c.id] for c in children], count, self.cfg.allocation_epsilon
        )
        log_q: Dict[int, np.ndarray] = {}
        log_target: Dict[int, float] = {}
        for child, m in zip(children, counts):
            if m == 0:
                log_q[child.id] = np.full(count, -np.inf)
                continue
            q, total = self.sample_recursive(node.path + (child.id,), child, child_starts, horizon - 1, m, rng)
            log_q[child.id] = q
            log_target[child.id] = total - np.log(m) + (np.log(prior[child.id]) if horizon - 1 > 0 else 0.0)

        log_v = self.table.record(node.path, prior, log_q)
        self.update_policy(node, log_target)
        return log_v

    # -- top level ---------------------------------------------------------

    def plan(self, start: RobotState, rng: np.random.Generator) -> PlanResult:
        graph, cfg = self.graph, self.cfg
        result = PlanResult()
        if graph.is_goal(graph.initial):
            result.goal_reached = True
            return result

        roots = self.actions(graph.initial)
        if not roots:
            return PlanResult(failed=True, reason=f"no applicable action from state {graph.initial}")
        starts = StartSet.single(start)
        root = self.nodes[()]
        self.policy(root, roots)
        prior = self.prior(graph.initial, roots)
        previous: Optional[float] = None

        for iteration in range(max(1, cfg.cem.max_iterations)):
            self.iteration = iteration
            self.table = QVTable()
            self._stats = IterationStats(iteration, -np.inf)

            log_q: Dict[int, np.ndarray] = {}
            log_target: Dict[int, float] = {}
            for action in roots:
                q, total = self.sample_recursive((action.id,), action, starts, cfg.horizon, cfg.cem.samples, rng)
                log_q[action.id] = q
                if np.isfinite(total):
                    log_target[action.id] = (
                        total - np.log(cfg.cem.samples) + (np.log(prior[action.id]) if cfg.horizon > 0 else 0.0)
                    )
            log_v = float(self.table.record((), prior, log_q)[0])
            self.update_policy(root, log_target)
            mean_ll = self.root_mean_log_likelihood(roots)
            self._stats.log_value = log_v
            self._stats.mean_log_likelihood = mean_ll
            result.stats.append(self._stats)
            result.value_history.append(log_v)
            logger.debug(
                f"Iteration {iteration}: log V(w0, s0) = {log_v:.4f}, mean log-likelihood {mean_ll:.4f}, "
                f"{self._stats.accepted} samples from {self._stats.draws} draws"
            )

            if all(self.nodes[(a.id,)].exhausted for a in roots):
                result.failed = True
                result.reason = "rejection budget exhausted for every root action"
                break
            # same stopping rule as cem.optimize, so a horizon of 0 is plain CEM
            if converged(previous, mean_ll, cfg.cem.tolerance):
                break
            previous = mean_ll

        result.root_policy = {graph.edges[a].label: p for a, p in root.policy.items()}
        if result.failed:
            return result
        return self.extract(result)

    def root_mean_log_likelihood(self, roots: Sequence[GroundedAction]) -> float:
        """Mean per-step expert log-likelihood over this iteration's root samples."""
        traces = [
            node.step_log_likelihood
            for a in roots
            if (node := self.nodes.get((a.id,))) is not None
            and node.iteration == self.iteration
            and not node.exhausted
            and node.step_log_likelihood is not None
        ]
        if not traces:
            return -np.inf
        return mean_log_likelihood(np.concatenate(traces, axis=0))

    def extract(self, result: PlanResult) -> PlanResult:
        """Follow argmax π(a|w) and pick the best continuous chain of last-iteration samples."""
        graph = self.graph
        chain: List[TreeNode] = []
        path: Path = ()
        state = graph.initial
        while not graph.is_goal(state) and len(chain) <= self.cfg.horizon:
            parent = self.nodes.get(path)
            candidates = [
                e
                for e in self.actions(state)
                if (n := self.nodes.get(path + (e.id,))) is not None
                and n.iteration == self.iteration
                and n.batch is not None
            ]
            if not candidates or parent is None:
                break
            choice = max(candidates, key=lambda e: parent.policy.get(e.id, 0.0))
            path = path + (choice.id,)
            chain.append(self.nodes[path])
            state = choice.target

        if not chain:
            result.failed, result.reason = True, "no root action produced valid samples"
            return result

        length = len(chain)
        while length > 0:
            scores, pointers = _chain_scores(chain[:length])
            if np.any(scores > -np.inf):
                break
            length -= 1
        if length == 0 or np.max(scores) < LOG_TINY:
            result.failed, result.reason = True, "every sampled trajectory has zero expert probability"
            return result
        if length < len(chain):
            logger.info(f"Plan truncated to {length} of {len(chain)} actions: no continuous chain below")

        j = int(np.argmax(scores))
        for depth, node in enumerate(chain[:length]):
            if depth > 0:
                j = int(pointers[depth - 1][j])
            result.actions.append(node.edge)
            result.trajectories.append(node.batch.trajectory(j))
            result.surrogates.append(node.surrogate)
        result.goal_reached = graph.is_goal(result.actions[-1].target)
        return result


def _chain_scores(chain: Sequence[TreeNode]) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Best summed log-likelihood of a full-depth chain starting at each root
    sample, and for each depth the child index continuing each parent sample.
    """
    scores = chain[-1].log_likelihood.copy()
    pointers: List[np.ndarray] = [np.empty(0, dtype=int)] * (len(chain) - 1)
    for depth in range(len(chain) - 2, -1, -1):
        parent, child = chain[depth], chain[depth + 1]
        best = np.full(len(parent.log_likelihood), -np.inf)
        arg = np.full(len(parent.log_likelihood), -1)
        for k, j in enumerate(child.batch.start_index):
            if scores[k] > best[j]:
                best[j], arg[j] = scores[k], k
        pointers[depth] = arg
        scores = parent.log_likelihood + best
    return scores, pointers


# ---------------------------------------------------------------------------
# Modes and receding-horizon execution
# ---------------------------------------------------------------------------


def mode_settings(mode: str, horizon: int) -> Tuple[int, bool]:
    """(horizon, restrict to one random task plan) for an ablation mode."""
    if mode == MODE_FULL:
        return horizon, False
    if mode == MODE_NO_LOOKAHEAD:
        return NO_LOOKAHEAD_HORIZON, False
    if mode == MODE_NO_OPTIONS:
        return horizon, True
    if mode == MODE_BASELINE:
        return 0, True
    raise ValueError(f"Unknown planning mode '{mode}'")


def random_task_plan(graph: TaskGraph, rng: np.random.Generator) -> List[int]:
    paths = graph.goal_paths()
    if not paths:
        raise PlanningError("No task plan reaches the goal")
    return paths[int(rng.integers(len(paths)))]


def execute(
    graph: TaskGraph,
    scene: Scene,
    library: SkillLibrary,
    cfg: TreeConfig,
    start: RobotState,
    rng: np.random.Generator,
    mode: str = MODE_FULL,
) -> PlanResult:
    """
    Plan and commit actions until a goal state is reached.

    A plan that reaches the goal is committed whole; otherwise only its first
    action is, and planning restarts from where that action ended.
    """
    horizon, restrict = mode_settings(mode, cfg.horizon)
    tree_cfg = TreeConfig(cfg.cem, horizon, cfg.policy_floor, cfg.allocation_epsilon, cfg.max_replans)
    allowed = set(random_task_plan(graph, rng)) if restrict else None

    committed = PlanResult()
    state_id, state = graph.initial, start
    for attempt in range(cfg.max_replans + 1):
        if graph.is_goal(state_id):
            break
        planner = TreePlanner(graph.rooted_at(state_id), scene, library, tree_cfg, allowed)
        result = planner.plan(state, rng)
        committed.value_history.extend(result.value_history)
        committed.stats.extend(result.stats)
        if attempt == 0:
            committed.root_policy = result.root_policy
        if result.failed or not result.actions:
            committed.failed = True
            committed.reason = result.reason or f"no progress from state {state_id}"
            return committed
        take = len(result.actions) if result.goal_reached else 1
        committed.actions.extend(result.actions[:take])
        committed.trajectories.extend(result.trajectories[:take])
        committed.surrogates.extend(result.surrogates[:take])
        committed.replans = attempt
        state_id = result.actions[take - 1].target
        state = result.trajectories[take - 1].final_state
        logger.info(f"Committed {', '.join(a.label for a in result.actions[:take])}")
    else:
        if not graph.is_goal(state_id):
            committed.failed = True
            committed.reason = f"goal not reached after {cfg.max_replans} replans"
            return committed

    committed.goal_reached = graph.is_goal(state_id)
    return committed
