import subprocess
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from motkit.core.boxes import BoundingBox
from motkit.core.exceptions import ConfigError, DataError, ObjectiveFailure
from motkit.core.search import (
    AveragePrecisionObjective,
    CommandObjective,
    SearchConfig,
    SearchDistribution,
    TrackingObjective,
    ppo2_update,
    sample_truncated_normal,
    search,
)
from motkit.tests.common_values import MOCK_META, detections_of, walking_track


class SearchConfigTestCase(SimpleTestCase):
    def test_validation(self):
        for changes in (
            {"rounds": 0},
            {"samples_per_step": 1},
            {"std": 0.0},
            {"lower": 1.0, "upper": 0.0},
            {"init_mean": 1.5},
            {"clip_epsilon": 1.0},
            {"learning_rate": 0.0},
        ):
            with self.assertRaises(ConfigError, msg=str(changes)):
                SearchConfig(**changes)


class SamplingTestCase(SimpleTestCase):
    def test_within_bounds(self):
        for mean in (0.0, 0.05, 0.5, 0.97, 1.0):
            distribution = SearchDistribution(np.array([mean, 1.0 - mean]), 0.2)
            samples = sample_truncated_normal(
                distribution, 500, np.random.default_rng(0)
            )
            self.assertEqual(samples.shape, (500, 2))
            self.assertTrue(np.all((samples >= 0.0) & (samples <= 1.0)))

    def test_deterministic(self):
        d = SearchDistribution(np.array([0.5]), 0.2)
        np.testing.assert_array_equal(
            sample_truncated_normal(d, 20, np.random.default_rng(3)),
            sample_truncated_normal(d, 20, np.random.default_rng(3)),
        )

    def test_symmetric_truncation_keeps_mean(self):
        samples = sample_truncated_normal(
            SearchDistribution(np.array([0.5]), 0.2), 10_000, np.random.default_rng(1)
        )
        self.assertLess(abs(samples.mean() - 0.5), 0.02)

    def test_mean_projected_into_bounds(self):
        np.testing.assert_array_equal(
            SearchDistribution(np.array([-0.3, 1.4]), 0.2).mean, [0.0, 1.0]
        )

    def test_invalid_count(self):
        with self.assertRaises(ConfigError):
            sample_truncated_normal(
                SearchDistribution(np.array([0.5]), 0.2), 0, np.random.default_rng(0)
            )


class Ppo2UpdateTestCase(SimpleTestCase):
    def setUp(self):
        self.cfg = SearchConfig()
        self.d = SearchDistribution(np.array([0.5]), 0.2)
        self.samples = sample_truncated_normal(self.d, 8, np.random.default_rng(5))

    def test_constant_rewards(self):
        updated = ppo2_update(self.d, self.samples, [0.3] * 8, self.cfg)
        np.testing.assert_array_equal(updated.mean, self.d.mean)

    def test_moves_toward_higher_rewards(self):
        rewards = self.samples[:, 0]
        self.assertGreater(
            ppo2_update(self.d, self.samples, rewards, self.cfg).mean[0], 0.5
        )
        self.assertLess(
            ppo2_update(self.d, self.samples, -rewards, self.cfg).mean[0], 0.5
        )

    def test_reward_shift_invariant(self):
        rewards = np.sin(7 * self.samples[:, 0])
        np.testing.assert_allclose(
            ppo2_update(self.d, self.samples, rewards, self.cfg).mean,
            ppo2_update(self.d, self.samples, rewards + 12.5, self.cfg).mean,
            atol=1e-9,
        )

    def test_stays_within_bounds(self):
        d = SearchDistribution(np.array([1.0]), 0.2)
        samples = sample_truncated_normal(d, 8, np.random.default_rng(2))
        cfg = SearchConfig(learning_rate=50.0, update_epochs=5)
        mean = ppo2_update(d, samples, samples[:, 0], cfg).mean[0]
        self.assertLessEqual(mean, 1.0)
        self.assertGreaterEqual(mean, 0.0)

    def test_score_function_matches_finite_difference(self):
        d = SearchDistribution(np.array([0.3, 0.8]), 0.2)
        samples = sample_truncated_normal(d, 10, np.random.default_rng(4))
        analytic = d.score_function(samples, d.mean)
        step = 1e-6
        for dim in range(2):
            shift = np.zeros(2)
            shift[dim] = step
            upper = d.log_density(samples, d.mean + shift)
            lower = d.log_density(samples, d.mean - shift)
            numeric = (upper - lower) / (2 * step)
            np.testing.assert_allclose(analytic[:, dim], numeric, rtol=1e-5, atol=1e-5)

    def test_needs_matching_rewards(self):
        with self.assertRaises(ConfigError):
            ppo2_update(self.d, self.samples, [1.0, 2.0], self.cfg)


class SearchTestCase(SimpleTestCase):
    def test_finds_one_dimensional_optimum(self):
        result = search(
            lambda x: -((x[0] - 0.7) ** 2),
            SearchConfig(rounds=5, steps_per_round=4, samples_per_step=8),
        )
        self.assertLessEqual(abs(result.best_params[0] - 0.7), 0.05)
        self.assertEqual(len(result.history), 20)

    def test_converges_across_seeds(self):
        hits = 0
        for seed in range(100):
            result = search(lambda x: -((x[0] - 0.7) ** 2), SearchConfig(seed=seed))
            hits += abs(result.best_params[0] - 0.7) <= 0.05
        self.assertGreaterEqual(hits, 95)

    def test_finds_two_dimensional_optimum(self):
        cfg = SearchConfig(
            rounds=10, steps_per_round=5, samples_per_step=16, dims=2, seed=1
        )
        result = search(lambda x: -((x[0] - 0.3) ** 2) - (x[1] - 0.8) ** 2, cfg)
        self.assertLessEqual(abs(result.best_params[0] - 0.3), 0.05)
        self.assertLessEqual(abs(result.best_params[1] - 0.8), 0.05)

    def test_constant_objective(self):
        result = search(lambda x: 1.0, SearchConfig())
        self.assertLess(abs(result.final_mean[0] - 0.5), 0.01)
        self.assertIn(
            list(result.best_params),
            [sample for step in result.history for sample in step.samples],
        )

    def test_history(self):
        result = search(lambda x: float(np.cos(5 * x[0])), SearchConfig(seed=3))
        best = [step.best_score for step in result.history]
        self.assertEqual(best, sorted(best))
        self.assertEqual(result.best_score, best[-1])
        self.assertTrue(all(len(step.samples) == 8 for step in result.history))

    def test_reproducible(self):
        def objective(x):
            return -abs(x[0] - 0.2)

        first = search(objective, SearchConfig(seed=9))
        second = search(objective, SearchConfig(seed=9))
        self.assertEqual(
            [step.samples for step in first.history],
            [step.samples for step in second.history],
        )
        self.assertEqual(
            [step.mean for step in first.history],
            [step.mean for step in second.history],
        )

    def test_never_leaves_bounds(self):
        seen = []

        def objective(x):
            seen.append(x.copy())
            return float(x.sum())

        search(
            objective,
            SearchConfig(
                dims=3, lower=0.2, upper=0.6, init_mean=0.6, learning_rate=5.0
            ),
        )
        seen = np.array(seen)
        self.assertTrue(np.all((seen >= 0.2) & (seen <= 0.6)))

    def test_failure_carries_params(self):
        def objective(x):
            if x[0] > 0.4:
                raise DataError("missing detections")
            return 0.0

        with self.assertRaises(ObjectiveFailure) as context:
            search(objective, SearchConfig(seed=0))
        self.assertGreater(context.exception.params[0], 0.4)
        self.assertIn("missing detections", str(context.exception))

    def test_non_finite_score(self):
        with self.assertRaises(ObjectiveFailure):
            search(lambda x: float("nan"), SearchConfig())

    def test_unexpected_exception_wrapped(self):
        with self.assertRaises(ObjectiveFailure):
            search(lambda x: 1 / 0, SearchConfig())


class CommandObjectiveTestCase(SimpleTestCase):
    """ Test the subprocess objective protocol """

    def completed(self, stdout):
        return subprocess.CompletedProcess(
            args=[], returncode=0, stdout=stdout, stderr=""
        )

    @mock.patch("motkit.core.search.subprocess.run")
    def test_params_appended_and_last_line_read(self, run):
        run.return_value = self.completed("epoch 1\nmAP 0.3\n\n0.625\n")
        score = CommandObjective(["./score.sh", "MOT17-04"], timeout=5)(
            np.array([0.5, 0.125])
        )
        self.assertEqual(score, 0.625)
        args, kwargs = run.call_args
        self.assertEqual(args[0], ["./score.sh", "MOT17-04", "0.500000", "0.125000"])
        self.assertEqual(kwargs["timeout"], 5)

    @mock.patch("motkit.core.search.subprocess.run")
    def test_bad_output(self, run):
        for stdout in ("", "done\n"):
            run.return_value = self.completed(stdout)
            with self.assertRaises(ObjectiveFailure):
                CommandObjective(["./score.sh"])(np.array([0.5]))

    @mock.patch("motkit.core.search.subprocess.run")
    def test_command_errors(self, run):
        for error in (
            subprocess.CalledProcessError(3, ["./score.sh"], stderr="out of memory"),
            subprocess.TimeoutExpired(["./score.sh"], 5),
            FileNotFoundError("./score.sh"),
        ):
            run.side_effect = error
            with self.assertRaises(ObjectiveFailure) as context:
                CommandObjective(["./score.sh"])(np.array([0.5]))
            self.assertEqual(context.exception.params, [0.5])

    def test_empty_command(self):
        with self.assertRaises(ConfigError):
            CommandObjective([])


class ShippedObjectivesTestCase(SimpleTestCase):
    def test_average_precision_objective(self):
        truth = {
            1: [BoundingBox(0, 0, 10, 10, frame=1)],
            2: [BoundingBox(50, 50, 10, 10, frame=2)],
        }
        dets = {
            1: [
                BoundingBox(0, 0, 10, 10, score=0.9, frame=1),
                BoundingBox(300, 0, 10, 10, score=0.3, frame=1),
            ],
            2: [BoundingBox(50, 50, 10, 10, score=0.6, frame=2)],
        }
        objective = AveragePrecisionObjective(dets, truth)
        self.assertAlmostEqual(objective(np.array([0.5])), 1.0)
        self.assertLess(objective(np.array([0.1])), 1.0)
        self.assertAlmostEqual(objective(np.array([0.7])), 0.5)

    def test_tracking_objective(self):
        gt = [walking_track(1, 1, 100), walking_track(2, 1, 100, x=900.0, vx=-3.0)]
        objective = TrackingObjective(MOCK_META, detections_of(gt), gt)
        self.assertGreater(objective(np.array([0.5])), 0.8)
        self.assertEqual(objective(np.array([0.95])), 0.0)
