import numpy as np
from django.test import SimpleTestCase

from motkit.core.boxes import BoundingBox, Trajectory
from motkit.core.exceptions import ConfigError, SceneKindError
from motkit.core.postprocess import (
    INTERPOLATE,
    MERGE,
    PRUNE,
    MergeParams,
    PostprocessConfig,
    gsi_smooth,
    linear_interpolate,
    merge_tracks,
    prune_short,
    run_postprocess,
)
from motkit.tests.common_values import MOCK_DYNAMIC_META, MOCK_META, walking_track


def with_gap(track: Trajectory, first: int, last: int) -> Trajectory:
    """ The track without frames first..last. """
    return Trajectory(
        track.id,
        {
            frame: box
            for frame, box in track.boxes.items()
            if not first <= frame <= last
        },
    )


class LinearInterpolateTestCase(SimpleTestCase):
    def test_fills_gap_exactly(self):
        full = walking_track(1, 1, 20)
        filled = linear_interpolate(with_gap(full, 5, 9), max_gap=5)
        self.assertEqual(filled.frames, list(range(1, 21)))
        for frame in range(5, 10):
            np.testing.assert_allclose(filled.boxes[frame].tlwh, full.boxes[frame].tlwh)
            self.assertTrue(filled.boxes[frame].interpolated)
        self.assertFalse(filled.boxes[4].interpolated)
        self.assertEqual(filled.observed_count, 15)

    def test_long_gap_left_open(self):
        gapped = with_gap(walking_track(1, 1, 20), 5, 9)
        self.assertEqual(len(linear_interpolate(gapped, max_gap=4)), 15)

    def test_observed_boxes_untouched(self):
        gapped = with_gap(walking_track(1, 1, 20), 5, 9)
        filled = linear_interpolate(gapped, max_gap=30)
        for frame, box in gapped.boxes.items():
            self.assertIs(filled.boxes[frame], box)

    def test_idempotent(self):
        once = linear_interpolate(with_gap(walking_track(1, 1, 20), 3, 12), max_gap=30)
        twice = linear_interpolate(once, max_gap=30)
        self.assertEqual(once.boxes, twice.boxes)

    def test_score_is_endpoint_mean(self):
        track = Trajectory(1)
        track.add(BoundingBox(0, 0, 10, 20, score=0.9, frame=1))
        track.add(BoundingBox(10, 0, 10, 20, score=0.5, frame=3))
        self.assertAlmostEqual(linear_interpolate(track, 5).boxes[2].score, 0.7)

    def test_invalid_max_gap(self):
        with self.assertRaises(ConfigError):
            linear_interpolate(walking_track(1, 1, 5), 0)


class GsiSmoothTestCase(SimpleTestCase):
    def test_constant_track_unchanged(self):
        track = walking_track(1, 1, 30, vx=0.0)
        smoothed = gsi_smooth(track)
        for frame, box in track.boxes.items():
            np.testing.assert_allclose(smoothed.boxes[frame].tlwh, box.tlwh, atol=1e-6)

    def test_covers_every_frame(self):
        smoothed = gsi_smooth(with_gap(walking_track(1, 1, 30), 10, 14))
        self.assertEqual(smoothed.frames, list(range(1, 31)))
        self.assertTrue(
            all(smoothed.boxes[frame].interpolated for frame in range(10, 15))
        )
        self.assertFalse(smoothed.boxes[9].interpolated)

    def test_matches_dense_solve(self):
        track = with_gap(walking_track(1, 1, 25, vy=0.5), 8, 12)
        track.boxes[5] = track.boxes[5].replace(x=track.boxes[5].x + 5.0)
        tau, noise = 10.0, 1e-2
        t_obs = np.array(track.frames, dtype=float)
        coords = np.array([box.tlwh for box in track])
        t_all = np.arange(1, 26, dtype=float)
        kernel = np.exp(-np.square(t_obs[:, None] - t_obs[None, :]) / (2 * tau**2))
        cross = np.exp(-np.square(t_all[:, None] - t_obs[None, :]) / (2 * tau**2))
        offset = coords.mean(axis=0)
        system = kernel + noise * np.eye(len(t_obs))
        expected = cross @ np.linalg.solve(system, coords - offset) + offset

        smoothed = gsi_smooth(track, tau=tau, noise=noise)
        np.testing.assert_allclose([box.tlwh for box in smoothed], expected, atol=1e-6)

    def test_linear_track_stays_on_line(self):
        track = walking_track(1, 1, 20, vy=1.5)
        smoothed = gsi_smooth(track)
        for frame in range(3, 19):
            np.testing.assert_allclose(
                smoothed.boxes[frame].tlwh, track.boxes[frame].tlwh, atol=0.5
            )

    def test_reduces_jitter(self):
        track = walking_track(1, 1, 40)
        jittered = Trajectory(
            1,
            {
                frame: box.replace(x=box.x + (5.0 if frame % 2 else -5.0))
                for frame, box in track.boxes.items()
            },
        )
        smoothed = gsi_smooth(jittered)

        def roughness(trajectory):
            return float(np.sum(np.square(np.diff([box.x for box in trajectory], n=2))))

        self.assertLess(roughness(smoothed), 0.5 * roughness(jittered))

    def test_empty_track_rejected(self):
        with self.assertRaises(ConfigError):
            gsi_smooth(Trajectory(1))

    def test_invalid_tau(self):
        with self.assertRaises(ConfigError):
            gsi_smooth(walking_track(1, 1, 5), tau=0.0)


class PruneShortTestCase(SimpleTestCase):
    def test_counts_observed_frames_only(self):
        short = linear_interpolate(with_gap(walking_track(1, 1, 12), 3, 10), max_gap=30)
        long = walking_track(2, 1, 10)
        self.assertEqual(len(short), 12)
        self.assertEqual([track.id for track in prune_short([short, long], 10)], [2])

    def test_invalid_min_len(self):
        with self.assertRaises(ConfigError):
            prune_short([], 0)


class MergeTracksTestCase(SimpleTestCase):
    def test_links_successor_and_fills_gap(self):
        lost = walking_track(1, 1, 20)
        successor = walking_track(2, 31, 60, x=160.0)
        merged = merge_tracks([successor, lost], MOCK_META)
        self.assertEqual(len(merged), 1)
        self.assertEqual(merged[0].id, 1)
        self.assertEqual(merged[0].frames, list(range(1, 61)))
        self.assertEqual(merged[0].observed_count, 50)
        self.assertAlmostEqual(merged[0].boxes[25].x, 138.0 + 22.0 * 5 / 11)

    def test_distant_successor_kept_apart(self):
        merged = merge_tracks(
            [walking_track(1, 1, 20), walking_track(2, 31, 60, x=600.0)], MOCK_META
        )
        self.assertEqual([track.id for track in merged], [1, 2])

    def test_area_ratio_gate(self):
        big = walking_track(2, 31, 60, x=135.0, y=135.0, w=100.0, h=260.0)
        self.assertEqual(
            len(merge_tracks([walking_track(1, 1, 20), big], MOCK_META)), 2
        )
        self.assertEqual(
            len(
                merge_tracks(
                    [walking_track(1, 1, 20), big],
                    MOCK_META,
                    MergeParams(area_ratio=4.5),
                )
            ),
            1,
        )

    def test_max_gap(self):
        tracks = [walking_track(1, 1, 20), walking_track(2, 31, 60, x=160.0)]
        self.assertEqual(
            len(merge_tracks(tracks, MOCK_META, MergeParams(max_gap=10))), 2
        )

    def test_shorter_gap_claims_successor(self):
        first = walking_track(1, 1, 20)
        second = walking_track(3, 10, 25, x=118.0)
        successor = walking_track(2, 31, 60, x=160.0)
        merged = merge_tracks([first, second, successor], MOCK_META)
        self.assertEqual([track.id for track in merged], [1, 3])
        self.assertEqual(merged[1].frames, list(range(10, 61)))
        self.assertEqual(merged[0].last_frame, 20)

    def test_chains_transitively(self):
        tracks = [
            walking_track(1, 1, 20),
            walking_track(2, 31, 50, x=160.0),
            walking_track(3, 61, 80, x=220.0),
        ]
        merged = merge_tracks(tracks, MOCK_META)
        self.assertEqual(len(merged), 1)
        self.assertEqual(merged[0].frames, list(range(1, 81)))
        self.assertEqual(merged[0].observed_count, 60)

    def test_dynamic_scene_rejected(self):
        with self.assertRaises(SceneKindError):
            merge_tracks([walking_track(1, 1, 20)], MOCK_DYNAMIC_META)


class RunPostprocessTestCase(SimpleTestCase):
    def test_interpolation_gap_defaults_to_track_buffer(self):
        gapped = with_gap(walking_track(1, 1, 30), 10, 19)
        cfg = PostprocessConfig(steps=(INTERPOLATE,))
        self.assertEqual(
            len(run_postprocess([gapped], MOCK_META, cfg, track_buffer=5)[0]), 20
        )
        self.assertEqual(
            len(run_postprocess([gapped], MOCK_META, cfg, track_buffer=30)[0]), 30
        )

    def test_merge_skipped_on_dynamic_scene(self):
        tracks = [walking_track(1, 1, 20), walking_track(2, 31, 60, x=160.0)]
        cfg = PostprocessConfig(steps=(MERGE,))
        self.assertEqual(len(run_postprocess(tracks, MOCK_DYNAMIC_META, cfg)), 2)
        self.assertEqual(len(run_postprocess(tracks, MOCK_META, cfg)), 1)

    def test_prune_ignores_interpolated_boxes(self):
        short = with_gap(walking_track(1, 1, 12), 3, 10)
        prune_first = PostprocessConfig(steps=(PRUNE, INTERPOLATE), min_len=5)
        self.assertEqual(run_postprocess([short], MOCK_META, prune_first), [])
        interpolate_first = PostprocessConfig(steps=(INTERPOLATE, PRUNE), min_len=5)
        self.assertEqual(run_postprocess([short], MOCK_META, interpolate_first), [])

    def test_unknown_step(self):
        with self.assertRaises(ConfigError):
            PostprocessConfig(steps=("smooth",))
