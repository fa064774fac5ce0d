"""
Detection ensembling: Weighted Boxes Fusion, with greedy NMS as the baseline.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from motkit.core.boxes import BoundingBox, iou
from motkit.core.exceptions import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class _Cluster:
    members: List[BoundingBox] = field(default_factory=list)
    weights: List[float] = field(default_factory=list)
    fused: BoundingBox = None

    def add(self, box: BoundingBox, weight: float) -> None:
        self.members.append(box)
        self.weights.append(weight)
        self.fused = self._fuse()

    def _fuse(self) -> BoundingBox:
        scores = np.array([box.score for box in self.members])
        weights = np.array(self.weights)
        coords = np.array([box.tlbr for box in self.members])
        coordinate_weights = scores * weights
        if coordinate_weights.sum() > 0:
            x1, y1, x2, y2 = coordinate_weights @ coords / coordinate_weights.sum()
        else:
            x1, y1, x2, y2 = coords.mean(axis=0)
        total = weights.sum()
        score = float((scores * weights).sum() / total) if total > 0 else 0.0
        first = self.members[0]
        return BoundingBox(
            x1, y1, x2 - x1, y2 - y1, score=min(1.0, score), frame=first.frame
        )


def wbf(
    det_sets: Sequence[Sequence[BoundingBox]],
    model_weights: Sequence[float] = None,
    iou_thresh: float = 0.55,
    score_thresh: float = 0.05,
) -> List[BoundingBox]:
    """
    Fuse one frame's detections from several models.

    Boxes are visited in descending score * weight order and join the running
    fused box they overlap best (IoU >= iou_thresh), or start a new cluster.
    Coordinates are averaged with weights score * model_weight; the fused score
    is the weight-normalised mean score rescaled by min(T, N) / N.
    """
    n_models = len(det_sets)
    if model_weights is None:
        model_weights = [1.0] * n_models
    if len(model_weights) != n_models:
        raise ConfigError(
            "ensemble.weights", f"expected {n_models} weights, got {len(model_weights)}"
        )
    if any(weight < 0 for weight in model_weights):
        raise ConfigError("ensemble.weights", "weights must be non-negative")
    if not 0.0 < iou_thresh < 1.0:
        raise ConfigError("ensemble.iou_thresh", f"must be in (0, 1), got {iou_thresh}")

    entries = [
        (box, float(weight))
        for boxes, weight in zip(det_sets, model_weights)
        for box in boxes
    ]
    if not entries:
        return []
    # sorted() is stable, so equal scores keep input order
    entries = sorted(entries, key=lambda entry: -entry[0].score * entry[1])

    clusters: List[_Cluster] = []
    for box, weight in entries:
        best, best_iou = None, iou_thresh
        for cluster in clusters:
            overlap = iou(cluster.fused, box)
            if overlap >= best_iou and (best is None or overlap > best_iou):
                best, best_iou = cluster, overlap
        if best is None:
            best = _Cluster()
            clusters.append(best)
        best.add(box, weight)

    fused = []
    for cluster in clusters:
        rescale = min(len(cluster.members), n_models) / n_models
        box = cluster.fused.replace(score=cluster.fused.score * rescale)
        if box.score >= score_thresh:
            fused.append(box)
    return sorted(fused, key=lambda box: -box.score)


def nms(dets: Sequence[BoundingBox], iou_thresh: float = 0.5) -> List[BoundingBox]:
    if not 0.0 < iou_thresh < 1.0:
        raise ConfigError("ensemble.iou_thresh", f"must be in (0, 1), got {iou_thresh}")
    kept: List[BoundingBox] = []
    for det in sorted(dets, key=lambda box: -box.score):
        if all(iou(det, other) < iou_thresh for other in kept):
            kept.append(det)
    return kept


def fuse_frames(
    det_files: Sequence[Dict[int, List[BoundingBox]]],
    method: str = "wbf",
    model_weights: Sequence[float] = None,
    iou_thresh: float = 0.55,
    score_thresh: float = 0.05,
) -> Dict[int, List[BoundingBox]]:
    """ Apply WBF (or NMS over the pooled boxes) frame by frame across det files. """
    frames = sorted({frame for dets in det_files for frame in dets})
    fused = {}
    for frame in frames:
        per_model = [dets.get(frame, []) for dets in det_files]
        if method == "wbf":
            boxes = wbf(per_model, model_weights, iou_thresh, score_thresh)
        elif method == "nms":
            boxes = nms([box for boxes in per_model for box in boxes], iou_thresh)
        else:
            raise ConfigError("ensemble.method", f"unknown method {method!r}")
        if boxes:
            fused[frame] = boxes
    logger.info(
        "Fused %d detection files over %d frames with %s",
        len(det_files),
        len(frames),
        method,
    )
    return fused
