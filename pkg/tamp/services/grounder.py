"""
Grounding of a parsed domain/problem pair into the task graph searched by the
planner.

States are numbered in breadth-first discovery order and actions are tried in
lexicographic (schema name, arguments) order, so identical inputs always give
the same graph and the same serialization.
"""

import itertools
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .pddl_parser import (
    ActionSchema,
    Atom,
    Domain,
    GoalUnreachableError,
    Problem,
    StateSpaceOverflowError,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_STATES = 10000


@dataclass(frozen=True)
class PredicateState:
    atoms: Tuple[Atom, ...] = ()

    @classmethod
    def from_atoms(cls, atoms: Iterable[Atom]) -> "PredicateState":
        return cls(tuple(sorted(set(atoms))))

    @property
    def key(self) -> str:
        """Canonical text form, used as a stable identifier across graphs."""
        return " ".join(str(a) for a in self.atoms)

    def holds(self, atom: Atom) -> bool:
        return atom in self.atoms

    def satisfies(self, goal: Iterable[Atom]) -> bool:
        atoms = set(self.atoms)
        return all(g in atoms for g in goal)


@dataclass(frozen=True)
class GroundAction:
    """A schema with every parameter bound, before it is placed in the graph."""

    schema: str
    args: Tuple[str, ...]
    positive: FrozenSet[Atom]
    negative: FrozenSet[Atom]
    add: FrozenSet[Atom]
    delete: FrozenSet[Atom]

    def applicable(self, atoms: FrozenSet[Atom]) -> bool:
        return self.positive <= atoms and not (self.negative & atoms)

    def apply(self, atoms: FrozenSet[Atom]) -> FrozenSet[Atom]:
        return (atoms - self.delete) | self.add


@dataclass(frozen=True)
class GroundedAction:
    id: int
    schema: str
    args: Tuple[str, ...]
    source: int
    target: int

    @property
    def skill(self) -> str:
        return self.schema

    @property
    def label(self) -> str:
        return " ".join((self.schema,) + self.args)

    def binding(self, domain: Domain) -> Dict[str, str]:
        schema = domain.action(self.schema)
        return dict(zip(schema.parameter_names, self.args))


@dataclass
class TaskGraph:
    states: List[PredicateState]
    edges: List[GroundedAction]
    initial: int
    goals: Tuple[int, ...]
    outgoing: Dict[int, List[int]] = field(default_factory=dict)

    def actions_from(self, state_id: int) -> List[GroundedAction]:
        """A(w)"""
        return [self.edges[e] for e in self.outgoing.get(state_id, [])]

    def successor(self, edge_id: int) -> int:
        """W(a)"""
        return self.edges[edge_id].target

    def is_goal(self, state_id: int) -> bool:
        return state_id in self.goals

    def state_id(self, key: str) -> Optional[int]:
        for i, state in enumerate(self.states):
            if state.key == key:
                return i
        return None

    def rooted_at(self, state_id: int) -> "TaskGraph":
        """Same graph with a different initial state (for replanning)."""
        return TaskGraph(self.states, self.edges, state_id, self.goals, self.outgoing)

    def goal_paths(self, start: Optional[int] = None, limit: int = 10000) -> List[List[int]]:
        """All acyclic edge paths from `start` (default: initial) to a goal state."""
        start = self.initial if start is None else start
        paths: List[List[int]] = []

        def walk(state: int, path: List[int], visited: set):
            if len(paths) >= limit:
                return
            if self.is_goal(state) and path:
                paths.append(list(path))
                return
            for edge in self.actions_from(state):
                if edge.target in visited:
                    continue
                path.append(edge.id)
                visited.add(edge.target)
                walk(edge.target, path, visited)
                visited.discard(edge.target)
                path.pop()

        if self.is_goal(start):
            return [[]]
        walk(start, [], {start})
        return paths

    def to_dict(self) -> dict:
        return {
            "initial": self.initial,
            "goals": list(self.goals),
            "states": [[str(a) for a in s.atoms] for s in self.states],
            "edges": [
                {
                    "id": e.id,
                    "schema": e.schema,
                    "args": list(e.args),
                    "source": e.source,
                    "target": e.target,
                    "skill": e.skill,
                }
                for e in self.edges
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_dot(self) -> str:
        lines = ["digraph task {", "  rankdir=LR;", "  node [shape=box, fontsize=10];"]
        for i, state in enumerate(self.states):
            label = "\\n".join(str(a) for a in state.atoms) or "(empty)"
            shape = ", peripheries=2" if self.is_goal(i) else ""
            style = ", style=bold" if i == self.initial else ""
            lines.append(f'  s{i} [label="{i}: {label}"{shape}{style}];')
        for edge in self.edges:
            lines.append(f'  s{edge.source} -> s{edge.target} [label="{edge.label}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def ground_actions(domain: Domain, problem: Problem) -> List[GroundAction]:
    """
    Instantiate every schema over type-compatible objects.

    Literals over feasibility predicates are taken as true: positive ones are
    dropped and groundings that need a negated one are discarded.
    """
    feasible = set(problem.feasibility)
    ground: List[GroundAction] = []

    for schema in sorted(domain.actions, key=lambda a: a.name):
        candidates = [problem.objects_of_type(domain, p.type) for p in schema.parameters]
        for args in itertools.product(*candidates):
            binding = dict(zip(schema.parameter_names, args))
            action = _instantiate(schema, binding, tuple(args), feasible)
            if action is not None:
                ground.append(action)

    ground.sort(key=lambda a: (a.schema, a.args))
    return ground


def _instantiate(
    schema: ActionSchema, binding: Dict[str, str], args: Tuple[str, ...], feasible: set
) -> Optional[GroundAction]:
    positive, negative = set(), set()
    for literal in schema.precondition:
        atom = literal.atom.substitute(binding)
        if atom.predicate in feasible:
            if not literal.positive:
                return None
            continue
        (positive if literal.positive else negative).add(atom)

    add = {a.substitute(binding) for a in schema.add_effects if a.predicate not in feasible}
    delete = {a.substitute(binding) for a in schema.del_effects if a.predicate not in feasible}
    return GroundAction(
        schema.name, args, frozenset(positive), frozenset(negative), frozenset(add), frozenset(delete)
    )


def ground(domain: Domain, problem: Problem, max_states: int = DEFAULT_MAX_STATES) -> TaskGraph:
    feasible = set(problem.feasibility)
    actions = ground_actions(domain, problem)
    initial_atoms = frozenset(a for a in problem.init if a.predicate not in feasible)

    index: Dict[FrozenSet[Atom], int] = {initial_atoms: 0}
    states = [PredicateState.from_atoms(initial_atoms)]
    edges: List[GroundedAction] = []
    outgoing: Dict[int, List[int]] = {}
    queue = deque([initial_atoms])

    while queue:
        atoms = queue.popleft()
        source = index[atoms]
        for action in actions:
            if not action.applicable(atoms):
                continue
            successor = action.apply(atoms)
            if successor not in index:
                if len(states) >= max_states:
                    raise StateSpaceOverflowError(
                        f"Reachable state space exceeds max_states={max_states}"
                    )
                index[successor] = len(states)
                states.append(PredicateState.from_atoms(successor))
                queue.append(successor)
            edge = GroundedAction(len(edges), action.schema, action.args, source, index[successor])
            edges.append(edge)
            outgoing.setdefault(source, []).append(edge.id)

    goals = tuple(i for i, s in enumerate(states) if s.satisfies(problem.goal))
    if not goals:
        missing = " ".join(str(a) for a in sorted(problem.goal))
        raise GoalUnreachableError(f"No reachable state satisfies the goal {missing}")

    logger.info(
        f"Grounded {problem.name}: {len(states)} states, {len(edges)} actions, {len(goals)} goal state(s)"
    )
    return TaskGraph(states, edges, 0, goals, outgoing)


def task_graph_from_dict(data: dict) -> TaskGraph:
    states = [PredicateState.from_atoms(_parse_atom_text(a) for a in atoms) for atoms in data["states"]]
    edges = [
        GroundedAction(e["id"], e["schema"], tuple(e["args"]), e["source"], e["target"])
        for e in data["edges"]
    ]
    outgoing: Dict[int, List[int]] = {}
    for edge in edges:
        outgoing.setdefault(edge.source, []).append(edge.id)
    return TaskGraph(states, edges, data["initial"], tuple(data["goals"]), outgoing)


def _parse_atom_text(text: str) -> Atom:
    parts = text.strip("()").split()
    return Atom(parts[0], tuple(parts[1:]))


def follow(graph: TaskGraph, labels: Sequence[str], start: Optional[int] = None) -> List[GroundedAction]:
    """Resolve a sequence of action labels ("approach link1 front") into graph edges."""
    state = graph.initial if start is None else start
    path = []
    for label in labels:
        edge = next((e for e in graph.actions_from(state) if e.label == label), None)
        if edge is None:
            raise GoalUnreachableError(f"Action '{label}' is not available in state {state}")
        path.append(edge)
        state = edge.target
    return path
