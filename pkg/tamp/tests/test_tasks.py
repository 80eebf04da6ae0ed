from unittest import mock

from django.test import SimpleTestCase

from tamp.constants import MODE_BASELINE, MODE_FULL
from tamp.services.experiment import Task, TrialOutcome
from tamp.services.scene_io import scene_to_dict
from tamp.tasks import dispatch_trials, run_trial_task
from tamp.tests.toy import SCENE, tiny_task


def job(mode):
    return {"model": {}, "config": {}, "scene": scene_to_dict(SCENE), "mode": mode, "seed": 3, "augmented": False}


class DispatchTrialsTest(SimpleTestCase):
    def setUp(self):
        domain, graph = tiny_task()
        self.task = Task(domain, None, graph)

    @mock.patch("tamp.tasks.trials._run")
    def test_inline(self, run):
        run.side_effect = lambda j: TrialOutcome("reach", j["mode"], j["seed"])
        outcomes = dispatch_trials([job(MODE_FULL), job(MODE_BASELINE)], self.task)
        self.assertEqual([o.mode for o in outcomes], [MODE_FULL, MODE_BASELINE])
        self.assertEqual(run.call_count, 2)

    @mock.patch("django_q.tasks.result_group")
    @mock.patch("django_q.tasks.async_task")
    def test_cluster_results_keep_job_order(self, async_task, result_group):
        returned = TrialOutcome("reach", MODE_BASELINE, 3, failed=True, reason="goal not reached").to_payload()
        result_group.return_value = [returned]
        with self.assertLogs("tamp.tasks.trials", level="WARNING"):
            outcomes = dispatch_trials([job(MODE_FULL), job(MODE_BASELINE)], self.task, workers=2)
        self.assertEqual(async_task.call_count, 2)
        self.assertEqual(async_task.call_args.args[0], "tamp.tasks.trials.run_trial_task")
        self.assertEqual([o.mode for o in outcomes], [MODE_FULL, MODE_BASELINE])
        self.assertEqual(outcomes[0].reason, "worker returned no result")
        self.assertEqual(outcomes[1].reason, "goal not reached")

    @mock.patch("tamp.tasks.trials._run", side_effect=RuntimeError("boom"))
    def test_crash_is_logged_and_raised(self, run):
        with self.assertLogs("tamp.tasks.trials", level="ERROR"), self.assertRaises(RuntimeError):
            run_trial_task(job(MODE_FULL))
