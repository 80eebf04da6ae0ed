"""
Tests for PDDL parsing and grounding into the task graph.
"""
from django.conf import settings
from django.test import SimpleTestCase

from tamp.services.grounder import follow, ground, task_graph_from_dict
from tamp.services.pddl_parser import (
    ArityError,
    GoalUnreachableError,
    PddlSyntaxError,
    StateSpaceOverflowError,
    TypeMismatchError,
    UndeclaredSymbolError,
    format_domain,
    format_problem,
    parse_domain,
    parse_problem,
)

DATA_DIR = settings.BASE_DIR / "data"

FIXTURES = settings.BASE_DIR / "tamp" / "tests" / "fixtures"

TINY_DOMAIN = (FIXTURES / "tiny_domain.pddl").read_text()
TINY_PROBLEM = (FIXTURES / "tiny_problem.pddl").read_text()

ASSEMBLY = [
    "approach link1 front",
    "grasp link1 front",
    "align link1 node1",
    "place link1 node1",
    "release link1 node1",
]


def structure_task():
    domain = parse_domain((DATA_DIR / "structure.pddl").read_text())
    problem = parse_problem((DATA_DIR / "problem.pddl").read_text(), domain)
    return domain, problem


class ParseDomainTest(SimpleTestCase):
    def test_structure_domain(self):
        domain, problem = structure_task()
        self.assertEqual(domain.name, "structure")
        self.assertEqual(domain.types, ("link", "node", "face"))
        self.assertEqual([a.name for a in domain.actions], ["approach", "grasp", "align", "place", "release"])
        self.assertEqual(domain.action("grasp").parameter_names, ("?l", "?f"))
        self.assertEqual(problem.feasibility, ("graspable",))
        self.assertEqual(problem.objects_of_type(domain, "face"), ["front", "left", "right"])
        self.assertEqual({str(a) for a in problem.goal}, {"(mated link1)"})

    def test_symbols_are_lowercased(self):
        domain = parse_domain(TINY_DOMAIN.replace("(domain tiny)", "(domain TINY)").replace("take", "Take"))
        self.assertEqual(domain.name, "tiny")
        self.assertIsNotNone(domain.action("take"))

    def test_comments_are_ignored(self):
        domain = parse_domain("; header\n" + TINY_DOMAIN.replace("(:types box)", "(:types box) ; boxes"))
        self.assertEqual(domain.types, ("box",))

    def test_undeclared_predicate_reports_line(self):
        with self.assertRaises(UndeclaredSymbolError) as ctx:
            parse_domain(TINY_DOMAIN.replace("(and (at ?b))", "(and (on ?b))"))
        self.assertEqual(ctx.exception.line, 6)
        self.assertIn("line 6", str(ctx.exception))

    def test_arity_mismatch(self):
        with self.assertRaises(ArityError):
            parse_domain(TINY_DOMAIN.replace("(and (at ?b))", "(and (at ?b ?b))"))

    def test_unbalanced_parentheses(self):
        with self.assertRaises(PddlSyntaxError):
            parse_domain(TINY_DOMAIN.rstrip()[:-1])
        with self.assertRaises(PddlSyntaxError):
            parse_domain(TINY_DOMAIN + ")")

    def test_unknown_variable_in_action(self):
        with self.assertRaises(UndeclaredSymbolError):
            parse_domain(TINY_DOMAIN.replace("(gone ?b)", "(gone ?x)"))

    def test_format_round_trip(self):
        domain, problem = structure_task()
        self.assertEqual(parse_domain(format_domain(domain)), domain)
        self.assertEqual(parse_problem(format_problem(problem), domain), problem)


class ParseProblemTest(SimpleTestCase):
    def setUp(self):
        self.domain = parse_domain(TINY_DOMAIN)

    def test_objects_and_init(self):
        problem = parse_problem(TINY_PROBLEM, self.domain)
        self.assertEqual(problem.object_type("a"), "box")
        self.assertEqual(len(problem.init), 2)

    def test_type_mismatch(self):
        text = TINY_PROBLEM.replace("(:objects a b - box)", "(:objects a - box b)")
        with self.assertRaises(TypeMismatchError):
            parse_problem(text, self.domain)

    def test_undeclared_object(self):
        with self.assertRaises(UndeclaredSymbolError):
            parse_problem(TINY_PROBLEM.replace("(at b))", "(at c))"), self.domain)

    def test_wrong_domain(self):
        with self.assertRaises(UndeclaredSymbolError):
            parse_problem(TINY_PROBLEM.replace("(:domain tiny)", "(:domain other)"), self.domain)

    def test_negative_goal_rejected(self):
        with self.assertRaises(PddlSyntaxError):
            parse_problem(TINY_PROBLEM.replace("(gone b)", "(not (at b))"), self.domain)


class GroundTest(SimpleTestCase):
    def test_structure_graph(self):
        graph = ground(*structure_task())
        self.assertEqual(len(graph.states), 11)
        self.assertEqual(len(graph.edges), 12)
        self.assertEqual(len(graph.goals), 2)
        self.assertEqual(graph.states[graph.initial].key, "")
        self.assertEqual(
            [e.label for e in graph.actions_from(graph.initial)],
            ["approach link1 front", "approach link1 left", "approach link1 right"],
        )

    def test_goal_paths_cover_every_face_and_node(self):
        graph = ground(*structure_task())
        paths = graph.goal_paths()
        self.assertEqual(len(paths), 6)
        self.assertTrue(all(len(p) == 5 for p in paths))
        self.assertEqual({graph.edges[p[-1]].skill for p in paths}, {"release"})

    def test_grasp_variants_share_a_state(self):
        graph = ground(*structure_task())
        targets = {e.target for e in graph.edges if e.skill == "grasp"}
        self.assertEqual(len(targets), 1)
        self.assertEqual(graph.states[targets.pop()].key, "(hand-occupied) (holding link1)")

    def test_grounding_is_deterministic(self):
        self.assertEqual(ground(*structure_task()).to_json(), ground(*structure_task()).to_json())

    def test_follow(self):
        graph = ground(*structure_task())
        path = follow(graph, ASSEMBLY)
        self.assertEqual([e.label for e in path], ASSEMBLY)
        self.assertTrue(graph.is_goal(path[-1].target))

    def test_follow_rejects_inapplicable_action(self):
        graph = ground(*structure_task())
        with self.assertRaises(GoalUnreachableError):
            follow(graph, ["grasp link1 front"])

    def test_graph_from_dict(self):
        graph = ground(*structure_task())
        restored = task_graph_from_dict(graph.to_dict())
        self.assertEqual([s.key for s in restored.states], [s.key for s in graph.states])
        self.assertEqual(restored.goals, graph.goals)
        self.assertEqual(restored.goal_paths(), graph.goal_paths())

    def test_dot_marks_goals(self):
        dot = ground(*structure_task()).to_dot()
        self.assertTrue(dot.startswith("digraph task {"))
        self.assertEqual(dot.count("peripheries=2"), 2)

    def test_empty_goal_is_satisfied_initially(self):
        domain = parse_domain(TINY_DOMAIN)
        problem = parse_problem(TINY_PROBLEM.replace("(:goal (and (gone a) (gone b)))", "(:goal)"), domain)
        graph = ground(domain, problem)
        self.assertIn(graph.initial, graph.goals)
        self.assertEqual(graph.goal_paths(), [[]])

    def test_unreachable_goal(self):
        domain, problem = structure_task()
        text = (DATA_DIR / "problem.pddl").read_text().replace("(:feasibility graspable)", "")
        with self.assertRaises(GoalUnreachableError):
            ground(domain, parse_problem(text, domain))

    def test_state_limit(self):
        with self.assertRaises(StateSpaceOverflowError):
            ground(*structure_task(), max_states=3)

    def test_tiny_graph(self):
        domain = parse_domain(TINY_DOMAIN)
        graph = ground(domain, parse_problem(TINY_PROBLEM, domain))
        # {a, b} -> {b} | {a} -> {}
        self.assertEqual(len(graph.states), 4)
        self.assertEqual(len(graph.edges), 4)
        self.assertEqual(len(graph.goal_paths()), 2)
