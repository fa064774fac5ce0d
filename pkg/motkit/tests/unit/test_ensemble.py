from typing import List, Sequence, Tuple

import numpy as np
from django.test import SimpleTestCase

from motkit.core.boxes import BoundingBox
from motkit.core.ensemble import fuse_frames, nms, wbf
from motkit.core.exceptions import ConfigError


def reference_wbf(
    det_sets: Sequence[Sequence[BoundingBox]],
    weights: Sequence[float],
    iou_thresh: float,
    score_thresh: float,
) -> List[Tuple[float, float, float, float, float]]:
    """ Cluster greedily, then average each cluster into (x1, y1, x2, y2, score). """

    def overlap(a, b):
        iw = min(a[2], b[2]) - max(a[0], b[0])
        ih = min(a[3], b[3]) - max(a[1], b[1])
        if iw <= 0 or ih <= 0:
            return 0.0
        inter = iw * ih
        return inter / (
            (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
        )

    def average(members):
        total = sum(score * weight for _, score, weight in members)
        coords = [
            sum(box[k] * score * weight for box, score, weight in members) / total
            for k in range(4)
        ]
        score = sum(score * weight for _, score, weight in members) / sum(
            weight for _, _, weight in members
        )
        return coords, score

    entries = []
    for boxes, weight in zip(det_sets, weights):
        for box in boxes:
            entries.append(
                ((box.x, box.y, box.x + box.w, box.y + box.h), box.score, weight)
            )
    entries.sort(key=lambda entry: -entry[1] * entry[2])

    clusters = []
    for entry in entries:
        overlaps = [overlap(average(cluster)[0], entry[0]) for cluster in clusters]
        candidates = [i for i, value in enumerate(overlaps) if value >= iou_thresh]
        if candidates:
            clusters[max(candidates, key=lambda i: (overlaps[i], -i))].append(entry)
        else:
            clusters.append([entry])

    fused = []
    for cluster in clusters:
        coords, score = average(cluster)
        score *= min(len(cluster), len(det_sets)) / len(det_sets)
        if score >= score_thresh:
            fused.append((*coords, score))
    return sorted(fused, key=lambda row: -row[4])


def random_sets(
    rng: np.random.Generator, models: int = 3, per_model: int = 5
) -> List[List[BoundingBox]]:
    centers = rng.uniform(50, 250, (3, 2))
    sets = []
    for _ in range(models):
        boxes = []
        for _ in range(rng.integers(0, per_model + 1)):
            cx, cy = centers[rng.integers(0, len(centers))] + rng.normal(0, 6, 2)
            w, h = rng.uniform(30, 60), rng.uniform(60, 140)
            boxes.append(
                BoundingBox(
                    cx - w / 2, cy - h / 2, w, h, score=float(rng.uniform(0.05, 1.0))
                )
            )
        sets.append(boxes)
    return sets


def as_rows(boxes: Sequence[BoundingBox]) -> List[Tuple[float, ...]]:
    return [(box.x, box.y, box.right, box.bottom, box.score) for box in boxes]


class WbfTestCase(SimpleTestCase):
    def test_single_model_identity(self):
        boxes = [
            BoundingBox(0, 0, 10, 10, score=0.9),
            BoundingBox(100, 100, 20, 40, score=0.4),
        ]
        fused = wbf([boxes])
        self.assertEqual(len(fused), 2)
        for original, result in zip(boxes, fused):
            np.testing.assert_allclose(result.tlwh, original.tlwh, atol=1e-9)
            self.assertAlmostEqual(result.score, original.score)

    def test_identical_boxes_two_models(self):
        box = BoundingBox(0, 0, 10, 10, score=0.8)
        fused = wbf([[box], [box]])
        self.assertEqual(len(fused), 1)
        np.testing.assert_allclose(fused[0].tlwh, [0, 0, 10, 10], atol=1e-9)
        self.assertAlmostEqual(fused[0].score, 0.8)

    def test_weighted_average(self):
        a = BoundingBox(0, 0, 10, 10, score=0.8)
        b = BoundingBox(2, 2, 10, 10, score=0.4)
        fused = wbf([[a], [b]], [1.0, 1.0], iou_thresh=0.4)
        self.assertEqual(len(fused), 1)
        self.assertAlmostEqual(fused[0].x, 0.8 / 1.2, places=9)
        self.assertAlmostEqual(fused[0].y, 0.8 / 1.2, places=9)
        self.assertAlmostEqual(fused[0].score, 0.6, places=9)

    def test_lone_box_rescaled(self):
        fused = wbf([[BoundingBox(0, 0, 10, 10, score=0.8)], []])
        self.assertAlmostEqual(fused[0].score, 0.4)

    def test_score_thresh_drops(self):
        self.assertEqual(
            wbf([[BoundingBox(0, 0, 10, 10, score=0.08)], []], score_thresh=0.05), []
        )

    def test_empty(self):
        self.assertEqual(wbf([[], []]), [])

    def test_weights_length_checked(self):
        with self.assertRaises(ConfigError):
            wbf([[], []], [1.0])

    def test_matches_reference(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            sets = random_sets(rng)
            weights = list(rng.uniform(0.5, 2.0, 3))
            fused = wbf(sets, weights, iou_thresh=0.55, score_thresh=0.05)
            expected = reference_wbf(sets, weights, 0.55, 0.05)
            self.assertEqual(len(fused), len(expected))
            np.testing.assert_allclose(
                np.array(as_rows(fused)).reshape(-1, 5),
                np.array(expected).reshape(-1, 5),
                atol=1e-9,
            )

    def test_output_within_hull_and_not_larger(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            sets = random_sets(rng)
            boxes = [box for boxes in sets for box in boxes]
            fused = wbf(sets)
            self.assertLessEqual(len(fused), len(boxes))
            for box in fused:
                self.assertGreaterEqual(box.x, min(b.x for b in boxes) - 1e-9)
                self.assertLessEqual(box.right, max(b.right for b in boxes) + 1e-9)

    def test_model_permutation_invariant(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            sets = random_sets(rng)
            weights = list(rng.uniform(0.5, 2.0, 3))
            order = rng.permutation(3)
            permuted = wbf([sets[i] for i in order], [weights[i] for i in order])
            np.testing.assert_allclose(
                np.array(as_rows(wbf(sets, weights))).reshape(-1, 5),
                np.array(as_rows(permuted)).reshape(-1, 5),
                atol=1e-9,
            )


class NmsTestCase(SimpleTestCase):
    def test_disjoint_kept(self):
        boxes = [
            BoundingBox(0, 0, 10, 10, score=0.5), BoundingBox(50, 50, 10, 10, score=0.9)
        ]
        self.assertEqual(len(nms(boxes)), 2)

    def test_identical_suppressed(self):
        kept = nms(
            [BoundingBox(0, 0, 10, 10, score=0.8), BoundingBox(0, 0, 10, 10, score=0.9)]
        )
        self.assertEqual([box.score for box in kept], [0.9])

    def test_chain(self):
        a = BoundingBox(0, 0, 10, 10, score=0.9)
        b = BoundingBox(6, 0, 10, 10, score=0.8)
        c = BoundingBox(12, 0, 10, 10, score=0.7)
        self.assertEqual(nms([c, b, a], iou_thresh=0.2), [a, c])

    def test_subset(self):
        boxes = [
            box for boxes in random_sets(np.random.default_rng(3)) for box in boxes
        ]
        kept = nms(boxes)
        self.assertTrue(all(box in boxes for box in kept))


class FuseFramesTestCase(SimpleTestCase):
    def test_frame_by_frame(self):
        first = {
            1: [BoundingBox(0, 0, 10, 10, score=0.8, frame=1)],
            2: [BoundingBox(5, 5, 10, 10, score=0.6, frame=2)],
        }
        second = {1: [BoundingBox(0, 0, 10, 10, score=0.8, frame=1)]}
        fused = fuse_frames([first, second])
        self.assertEqual(sorted(fused), [1, 2])
        self.assertAlmostEqual(fused[1][0].score, 0.8)
        self.assertAlmostEqual(fused[2][0].score, 0.3)
        self.assertEqual(fused[2][0].frame, 2)

    def test_nms(self):
        first = {1: [BoundingBox(0, 0, 10, 10, score=0.8, frame=1)]}
        second = {1: [BoundingBox(0, 0, 10, 10, score=0.9, frame=1)]}
        self.assertEqual(
            [box.score for box in fuse_frames([first, second], method="nms")[1]], [0.9]
        )

    def test_unknown_method(self):
        with self.assertRaises(ConfigError):
            fuse_frames([{1: [BoundingBox(0, 0, 1, 1)]}], method="vote")
