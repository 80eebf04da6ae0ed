"""
Tests for demonstrations, expert fitting, augmentation and model binding.
"""
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from tamp.services.demonstrations import (
    DemonstrationError,
    Waypoints,
    assembly_script,
    demonstration_from_execution,
    demonstration_set,
    joint_path,
    load_demonstration,
    load_demonstrations,
    save_demonstration,
    script_demo,
    script_segment,
)
from tamp.services.expert import BoundModel, SkillSettings, augment, fit_expert, load_model, save_model
from tamp.services.grounder import follow, ground
from tamp.services.pddl_parser import parse_domain, parse_problem
from tamp.services.scene_io import load_scene
from tamp.services.simulator import SceneObject, forward_kinematics
from tamp.tests.toy import DMP, REFERENCE, SCENE, goal_of, mean_vector, tiny_task
from tamp.utils.dmp import DmpConfig, rollout, vector_as_params
from tamp.utils.geometry import PlanarPose

DATA_DIR = settings.BASE_DIR / "data"

BOXES = replace(
    SCENE,
    name="boxes",
    objects=(SceneObject("a", PlanarPose(-0.3, 0.5, 0.0)), SceneObject("b", PlanarPose(-0.3, -0.5, 0.0))),
)


def execution(demo_id, first, second):
    """Relabeled reach-then-reach run over the tiny task."""
    domain, graph = tiny_task()
    edges = follow(graph, ["take a", "take b"])
    t1 = rollout(vector_as_params(mean_vector(first), 3), BOXES.start_state(), BOXES, DMP)
    t2 = rollout(vector_as_params(mean_vector(second), 3), t1.final_state, BOXES, DMP)
    return demonstration_from_execution(demo_id, BOXES, domain, graph, edges, [t1, t2])


def structure_task():
    domain = parse_domain((DATA_DIR / "structure.pddl").read_text())
    return domain, ground(domain, parse_problem((DATA_DIR / "problem.pddl").read_text(), domain))


class ScriptTest(SimpleTestCase):
    def test_assembly_script(self):
        self.assertEqual(
            assembly_script("left", "node2"),
            [
                "approach link1 left",
                "grasp link1 left",
                "align link1 node2",
                "place link1 node2",
                "release link1 node2",
            ],
        )

    def test_joint_path_ends_at_target(self):
        times = np.linspace(0.0, 2.0, 51)
        target = goal_of(REFERENCE)
        q = joint_path(SCENE, SCENE.start_state(), Waypoints(target), times)
        self.assertEqual(q.shape, (51, 3))
        np.testing.assert_allclose(q[0], SCENE.home, atol=1e-12)
        reached, _ = forward_kinematics(SCENE.arm, q[-1])
        self.assertLess(reached.distance(target), 1e-6)

    def test_unreachable_waypoint(self):
        with self.assertRaises(DemonstrationError):
            joint_path(SCENE, SCENE.start_state(), Waypoints(PlanarPose(3.0, 0.0, 0.0)), np.linspace(0, 1, 5))

    def test_release_in_place(self):
        domain, graph = structure_task()
        scene = load_scene(DATA_DIR / "scenes" / "canonical.json")
        edge = next(e for e in graph.edges if e.label == "release link1 node1")
        with self.assertLogs("tamp.services.simulator", level="WARNING"):
            trajectory = script_segment(scene, domain, edge, scene.start_state(), np.random.default_rng(0))
        self.assertTrue(trajectory.valid)
        np.testing.assert_allclose(trajectory.q, np.broadcast_to(scene.home, trajectory.q.shape), atol=1e-6)
        self.assertEqual((trajectory.gripper[0], trajectory.gripper[-1]), (1.0, 0.0))

    def test_grasp_out_of_reach_is_infeasible(self):
        domain, graph = structure_task()
        scene = load_scene(DATA_DIR / "scenes" / "canonical.json")
        edge = next(e for e in graph.edges if e.label == "grasp link1 front")
        with self.assertRaises(DemonstrationError):
            script_segment(scene, domain, edge, scene.start_state(), np.random.default_rng(0))

    def test_skill_without_script(self):
        domain, graph = tiny_task()
        with self.assertRaises(DemonstrationError):
            script_segment(BOXES, domain, graph.edges[0], BOXES.start_state(), np.random.default_rng(0))

    def test_script_must_follow_graph(self):
        domain, graph = structure_task()
        scene = load_scene(DATA_DIR / "scenes" / "canonical.json")
        with self.assertRaises(DemonstrationError):
            script_demo(scene, domain, graph, ["grasp link1 front"], np.random.default_rng(0))

    def test_canonical_scene_demonstrates_every_variant(self):
        domain, graph = structure_task()
        scene = load_scene(DATA_DIR / "scenes" / "canonical.json")
        demos = demonstration_set([scene], domain, graph)
        self.assertEqual(
            [(d.labels[0], d.labels[-1]) for d in demos],
            [
                (f"approach link1 {face}", f"release link1 {node}")
                for face in ("front", "left", "right")
                for node in ("node1", "node2")
            ],
        )
        headings = {}
        for demo in demos:
            demo.check()
            grasp, _ = forward_kinematics(scene.arm, demo.segments[0].trajectory.q[-1])
            headings.setdefault(demo.labels[0], set()).add(round(grasp.theta, 6))
            final = demo.segments[-1].trajectory.final_state
            node = demo.labels[-1].split()[-1]
            mate = scene.object(node).frame_pose("mate")
            self.assertLess(final.object_pose(scene, "link1").distance(mate), 1e-3)
        self.assertEqual([len(h) for h in headings.values()], [1, 1, 1])
        self.assertEqual(len(set.union(*headings.values())), 3)

    def test_infeasible_demos_are_skipped(self):
        domain, graph = structure_task()
        with self.assertLogs("tamp.services.demonstrations", level="WARNING"):
            demos = demonstration_set([SCENE], domain, graph, faces=("front",), nodes=("node1",))
        self.assertEqual(demos, [])


class DemonstrationFileTest(SimpleTestCase):
    def setUp(self):
        self.demo = execution("run-000", REFERENCE, (0.6, 0.3, 0.2))

    def test_execution_is_labeled(self):
        self.assertEqual(self.demo.source, "execution")
        self.assertEqual(self.demo.labels, ["take a", "take b"])
        self.assertEqual(self.demo.segments[0].state_after, self.demo.segments[1].state_before)
        self.demo.check()

    def test_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_demonstration(self.demo, tmp)
            self.assertEqual(path.name, "run-000.json")
            loaded = load_demonstration(path)
            loaded.check()
            self.assertEqual(loaded.labels, self.demo.labels)
            np.testing.assert_array_equal(loaded.segments[1].trajectory.q, self.demo.segments[1].trajectory.q)
            self.assertEqual(len(load_demonstrations(tmp)), 1)

    def test_fit_from_saved_demonstrations(self):
        with tempfile.TemporaryDirectory() as tmp:
            save_demonstration(self.demo, tmp)
            loaded = load_demonstrations(tmp)
        trajectory = loaded[0].segments[0].trajectory
        self.assertEqual(trajectory.object_poses["a"].shape, (3,))
        from_file = fit_expert(loaded, n_components=1, seed=0).skill("take")
        in_memory = fit_expert([self.demo], n_components=1, seed=0).skill("take")
        np.testing.assert_allclose(from_file.terminals, in_memory.terminals, atol=1e-9)
        np.testing.assert_allclose(from_file.features, in_memory.features, atol=1e-9)

    def test_stale_features(self):
        self.demo.segments[0].features.values[5, 1] += 1.0
        with self.assertRaises(DemonstrationError):
            self.demo.check()

    def test_broken_chain(self):
        self.demo.segments.reverse()
        with self.assertRaises(DemonstrationError):
            self.demo.check()

    def test_missing_or_empty_directory(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(DemonstrationError):
                load_demonstrations(tmp)
            with self.assertRaises(DemonstrationError):
                load_demonstrations(Path(tmp) / "missing")
            bad = Path(tmp) / "bad.json"
            bad.write_text("{not json")
            with self.assertRaises(DemonstrationError):
                load_demonstration(bad)


class ExpertTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.demos = [
            execution("demo-000", REFERENCE, (0.6, 0.3, 0.2)),
            execution("demo-001", (0.3, 0.6, 0.4), (0.5, 0.4, 0.1)),
        ]
        cls.model = fit_expert(cls.demos, n_components=2, seed=0)

    def test_fit(self):
        skill = self.model.skill("take")
        self.assertEqual(skill.features.shape, (4 * 101, skill.schema.dimension))
        self.assertEqual(skill.weights.shape, (4, 15))
        self.assertEqual(skill.terminals.shape, (4, 3))
        self.assertEqual(skill.sources, ["demo-000", "demo-000", "demo-001", "demo-001"])
        self.assertEqual(skill.schema.bound, {})
        self.assertEqual(self.model.provenance, [{"event": "fit", "demos": ["demo-000", "demo-001"]}])
        self.assertEqual(self.model.covers(["take", "drop"]), ["drop"])

    def test_prior_counts_labels(self):
        _, graph = tiny_task()
        initial = graph.states[graph.initial].key
        self.assertEqual(self.model.prior.empirical(initial), {"take a": 1.0})

    def test_initial_override_needs_state(self):
        with self.assertRaises(DemonstrationError):
            fit_expert(self.demos, prior_overrides={"initial": {"take b": 1.0}})
        _, graph = tiny_task()
        initial = graph.states[graph.initial].key
        model = fit_expert(self.demos, prior_overrides={"initial": {"take b": 1.0}}, initial_state_key=initial)
        self.assertGreater(model.prior.distribution(initial, ["take a", "take b"])["take b"], 0.99)

    def test_no_demonstrations(self):
        with self.assertRaises(DemonstrationError):
            fit_expert([])

    def test_augment(self):
        run = execution("run-007", (0.45, 0.45, 0.3), (0.55, 0.35, 0.2))
        augmented = augment(self.model, [run], ["run-007"])
        skill = augmented.skill("take")
        self.assertEqual(skill.features.shape[0], 6 * 101)
        self.assertEqual(skill.sources[-2:], ["run-007", "run-007"])
        self.assertEqual(augmented.provenance[-1], {"event": "augment", "round": 1, "executions": ["run-007"]})
        self.assertEqual(self.model.skill("take").features.shape[0], 4 * 101)
        again = augment(augmented, [run], ["run-007"])
        self.assertEqual(again.provenance[-1]["round"], 2)
        self.assertIs(augment(self.model, [run], []), self.model)
        with self.assertRaises(DemonstrationError):
            augment(self.model, [run], ["run-999"])

    def test_save_and_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_model(self.model, Path(tmp) / "models" / "expert.json")
            loaded = load_model(path)
        features = self.model.skill("take").features[:10]
        np.testing.assert_allclose(
            loaded.skill("take").density.log_pdf(features), self.model.skill("take").density.log_pdf(features)
        )
        np.testing.assert_array_equal(loaded.skill("take").weights, self.model.skill("take").weights)
        self.assertEqual(loaded.prior.counts, self.model.prior.counts)
        self.assertEqual(loaded.provenance, self.model.provenance)
        self.assertEqual(loaded.dmp, self.model.dmp)
        with self.assertRaises(DemonstrationError):
            load_model(Path(tmp) / "missing.json")

    def test_bound_model(self):
        domain, graph = tiny_task()
        bound = BoundModel(self.model, domain, BOXES)
        edge = graph.actions_from(graph.initial)[0]
        ctx = bound.context(edge)
        self.assertEqual(ctx.label, edge.label)
        self.assertEqual(ctx.schema.objects, [edge.args[0]])
        self.assertIsNone(ctx.grasp_object)
        v0 = bound.initial_surrogate(edge, BOXES.start_state())
        self.assertEqual(v0.dim, 18)
        goal = BOXES.object(edge.args[0]).pose.compose(self.model.skill("take").terminal_mean)
        np.testing.assert_allclose(v0.mean[-3:], goal.as_array())
        p = bound.prior(graph.states[graph.initial].key, [e.label for e in graph.actions_from(graph.initial)])
        self.assertAlmostEqual(sum(p.values()), 1.0)

    def test_bound_model_uses_run_dmp(self):
        domain, graph = tiny_task()
        edge = graph.actions_from(graph.initial)[0]
        run = SkillSettings(duration=1.5, dmp=DmpConfig(dt=0.04))
        ctx = BoundModel(self.model, domain, BOXES, run).context(edge)
        self.assertEqual(ctx.dmp.dt, 0.04)
        self.assertEqual(ctx.duration, 1.5)
        self.assertEqual(BoundModel(self.model, domain, BOXES).context(edge).dmp, self.model.dmp)
        with self.assertRaisesMessage(DemonstrationError, "basis functions"):
            BoundModel(self.model, domain, BOXES, SkillSettings(dmp=DmpConfig(n_basis=7)))
