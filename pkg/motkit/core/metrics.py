"""
Detection and tracking evaluation: AP@0.5, CLEAR (MOTA, MOTP), identity
metrics (IDF1, IDP, IDR) and HOTA.

Matching follows the benchmark's reference evaluator: per-frame Hungarian
matching for CLEAR and HOTA, one global identity matching for IDF1.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from motkit.core.boxes import BoundingBox, SceneKind, Trajectory, iou_matrix
from motkit.core.exceptions import MetricUndefined

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps
HOTA_ALPHAS = np.arange(0.05, 0.99, 0.05)

PEDESTRIAN = 1
# person on vehicle, static person, distractor, reflection
DISTRACTOR_CLASSES = frozenset({2, 7, 8, 12})

Detections = Dict[int, List[BoundingBox]]


@dataclass(frozen=True)
class AnnotatedBox:
    """ One ground-truth row with the benchmark's annotation columns. """

    track_id: int
    box: BoundingBox
    flag: int = 1
    cls: int = PEDESTRIAN
    visibility: float = 1.0


@dataclass
class ClearResult:
    mota: float
    motp: float
    idsw: int
    fp: int
    fn: int
    tp: int
    gt_count: int


@dataclass
class IdentityResult:
    idf1: float
    idp: float
    idr: float
    idtp: int


@dataclass
class HotaResult:
    hota: float
    deta: float
    assa: float
    per_alpha: List[float] = field(default_factory=list)


@dataclass
class EvalReport:
    sequence: str
    scene_kind: str = SceneKind.STATIC.value
    map50: Optional[float] = None
    mota: float = 0.0
    motp: float = 0.0
    idf1: float = 0.0
    idp: float = 0.0
    idr: float = 0.0
    hota: float = 0.0
    deta: float = 0.0
    assa: float = 0.0
    idsw: int = 0
    fp: int = 0
    fn: int = 0
    gt_count: int = 0
    identities: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Detection AP


def average_precision(
    dets: Detections, gts: Detections, iou_thresh: float = 0.5
) -> float:
    """
    All-point interpolated AP of detections against ground truth.

    Detections are visited in descending score over all frames and matched to
    the highest-IoU unclaimed ground-truth box of their frame.
    """
    total_gt = sum(len(boxes) for boxes in gts.values())
    if total_gt == 0:
        raise MetricUndefined(
            "Average precision is undefined without ground-truth boxes"
        )

    ranked = sorted(
        (
            (det.score, frame, idx)
            for frame, boxes in dets.items()
            for idx, det in enumerate(boxes)
        ),
        key=lambda item: -item[0],
    )
    if not ranked:
        return 0.0

    overlaps = {frame: iou_matrix(dets[frame], gts.get(frame, [])) for frame in dets}
    claimed = {frame: np.zeros(len(boxes), dtype=bool) for frame, boxes in gts.items()}
    hits = np.zeros(len(ranked))
    for rank, (_, frame, idx) in enumerate(ranked):
        row = overlaps[frame][idx] if overlaps[frame].size else np.zeros(0)
        if not row.size:
            continue
        row = np.where(claimed[frame], -1.0, row)
        best = int(np.argmax(row))
        if row[best] >= iou_thresh:
            claimed[frame][best] = True
            hits[rank] = 1.0

    tp = np.cumsum(hits)
    recall = tp / total_gt
    precision = tp / np.arange(1, len(ranked) + 1)

    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    changes = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changes + 1] - mrec[changes]) * mpre[changes + 1]))


# ---------------------------------------------------------------------------
# Tracking metrics


@dataclass
class _Frame:
    gt_ids: np.ndarray
    pred_ids: np.ndarray
    similarity: np.ndarray


@dataclass
class _Sequence:
    frames: List[_Frame]
    n_gt_ids: int
    n_pred_ids: int
    gt_dets: int
    pred_dets: int


def _by_frame(
    tracks: Sequence[Trajectory]
) -> Tuple[Dict[int, List[Tuple[int, BoundingBox]]], int]:
    index = {track.id: i for i, track in enumerate(sorted(tracks, key=lambda t: t.id))}
    frames: Dict[int, List[Tuple[int, BoundingBox]]] = {}
    for track in tracks:
        for box in track:
            frames.setdefault(box.frame, []).append((index[track.id], box))
    return frames, len(index)


def _prepare(pred: Sequence[Trajectory], gt: Sequence[Trajectory]) -> _Sequence:
    pred_frames, n_pred = _by_frame(pred)
    gt_frames, n_gt = _by_frame(gt)
    frames = []
    for frame in sorted(set(pred_frames) | set(gt_frames)):
        gt_here = gt_frames.get(frame, [])
        pred_here = pred_frames.get(frame, [])
        frames.append(
            _Frame(
                gt_ids=np.array([i for i, _ in gt_here], dtype=int),
                pred_ids=np.array([i for i, _ in pred_here], dtype=int),
                similarity=iou_matrix(
                    [b for _, b in gt_here], [b for _, b in pred_here]
                ),
            )
        )
    return _Sequence(
        frames=frames,
        n_gt_ids=n_gt,
        n_pred_ids=n_pred,
        gt_dets=sum(len(f.gt_ids) for f in frames),
        pred_dets=sum(len(f.pred_ids) for f in frames),
    )


def clear_metrics(
    pred: Sequence[Trajectory], gt: Sequence[Trajectory], iou_thresh: float = 0.5
) -> ClearResult:
    data = _prepare(pred, gt)
    tp = fn = fp = idsw = 0
    motp_sum = 0.0
    # last pred matched to each gt, ever / at the previous frame
    last_match = np.full(data.n_gt_ids, np.nan)
    prev_step_match = np.full(data.n_gt_ids, np.nan)

    for frame in data.frames:
        n_gt, n_pred = len(frame.gt_ids), len(frame.pred_ids)
        # empty frames keep the previous matches
        if n_gt == 0:
            fp += n_pred
            continue
        if n_pred == 0:
            fn += n_gt
            continue
        continuation = prev_step_match[frame.gt_ids[:, None]] == frame.pred_ids[None, :]
        score = 1000.0 * continuation + frame.similarity
        score[frame.similarity < iou_thresh - EPS] = 0.0
        rows, cols = linear_sum_assignment(-score)
        keep = score[rows, cols] > EPS
        rows, cols = rows[keep], cols[keep]

        matched_gt = frame.gt_ids[rows]
        matched_pred = frame.pred_ids[cols]
        previous = last_match[matched_gt]
        idsw += int(np.sum(~np.isnan(previous) & (previous != matched_pred)))
        prev_step_match[:] = np.nan
        prev_step_match[matched_gt] = matched_pred
        last_match[matched_gt] = matched_pred

        tp += len(rows)
        fn += n_gt - len(rows)
        fp += n_pred - len(rows)
        motp_sum += float(frame.similarity[rows, cols].sum())

    gt_count = data.gt_dets
    mota = (tp - fp - idsw) / max(1, gt_count)
    return ClearResult(
        mota=float(mota),
        motp=motp_sum / max(1, tp),
        idsw=idsw,
        fp=fp,
        fn=fn,
        tp=tp,
        gt_count=gt_count,
    )


def identity_metrics(
    pred: Sequence[Trajectory], gt: Sequence[Trajectory], iou_thresh: float = 0.5
) -> IdentityResult:
    """ IDF1 from the one-to-one identity matching with the most co-detected frames. """
    data = _prepare(pred, gt)
    if data.gt_dets + data.pred_dets == 0:
        return IdentityResult(0.0, 0.0, 0.0, 0)
    potential = np.zeros((data.n_gt_ids, data.n_pred_ids))
    for frame in data.frames:
        if frame.similarity.size == 0:
            continue
        gi, pi = np.nonzero(frame.similarity >= iou_thresh)
        np.add.at(potential, (frame.gt_ids[gi], frame.pred_ids[pi]), 1)
    idtp = 0
    if potential.size:
        rows, cols = linear_sum_assignment(-potential)
        idtp = int(potential[rows, cols].sum())
    return IdentityResult(
        idf1=2.0 * idtp / (data.gt_dets + data.pred_dets),
        idp=idtp / max(1, data.pred_dets),
        idr=idtp / max(1, data.gt_dets),
        idtp=idtp,
    )


def clear_idf1(
    pred: Sequence[Trajectory], gt: Sequence[Trajectory], iou_thresh: float = 0.5
) -> Tuple[float, int, int, int, float]:
    clear = clear_metrics(pred, gt, iou_thresh)
    identity = identity_metrics(pred, gt, iou_thresh)
    return clear.mota, clear.idsw, clear.fp, clear.fn, identity.idf1


def hota(pred: Sequence[Trajectory], gt: Sequence[Trajectory]) -> HotaResult:
    """
    HOTA over the 19-point alpha grid.

    Per-frame matching maximises IoU weighted by the global alignment score of
    each (gt, pred) identity pair, then each alpha keeps the pairs with IoU >= alpha.
    """
    data = _prepare(pred, gt)
    n_alpha = len(HOTA_ALPHAS)
    if data.pred_dets == 0 or data.gt_dets == 0:
        return HotaResult(0.0, 0.0, 0.0, [0.0] * n_alpha)

    potential = np.zeros((data.n_gt_ids, data.n_pred_ids))
    gt_id_count = np.zeros((data.n_gt_ids, 1))
    pred_id_count = np.zeros((1, data.n_pred_ids))
    for frame in data.frames:
        sim = frame.similarity
        if sim.size:
            denominator = sim.sum(axis=0)[None, :] + sim.sum(axis=1)[:, None] - sim
            normalised = np.zeros_like(sim)
            positive = denominator > EPS
            normalised[positive] = sim[positive] / denominator[positive]
            potential[frame.gt_ids[:, None], frame.pred_ids[None, :]] += normalised
        gt_id_count[frame.gt_ids] += 1
        pred_id_count[0, frame.pred_ids] += 1
    global_alignment = potential / (gt_id_count + pred_id_count - potential)

    tp = np.zeros(n_alpha)
    fn = np.zeros(n_alpha)
    fp = np.zeros(n_alpha)
    matches = np.zeros((n_alpha, data.n_gt_ids, data.n_pred_ids))
    for frame in data.frames:
        n_gt, n_pred = len(frame.gt_ids), len(frame.pred_ids)
        if n_gt == 0 or n_pred == 0:
            fn += n_gt
            fp += n_pred
            continue
        alignment = global_alignment[frame.gt_ids[:, None], frame.pred_ids[None, :]]
        score = alignment * frame.similarity
        rows, cols = linear_sum_assignment(-score)
        for a, alpha in enumerate(HOTA_ALPHAS):
            ok = frame.similarity[rows, cols] >= alpha - EPS
            count = int(ok.sum())
            tp[a] += count
            fn[a] += n_gt - count
            fp[a] += n_pred - count
            if count:
                matches[a, frame.gt_ids[rows[ok]], frame.pred_ids[cols[ok]]] += 1

    assa = np.zeros(n_alpha)
    for a in range(n_alpha):
        counts = matches[a]
        alignment = counts / np.maximum(1, gt_id_count + pred_id_count - counts)
        assa[a] = (counts * alignment).sum() / max(1.0, tp[a])
    deta = tp / np.maximum(1.0, tp + fn + fp)
    per_alpha = np.sqrt(deta * assa)
    return HotaResult(
        hota=float(per_alpha.mean()),
        deta=float(deta.mean()),
        assa=float(assa.mean()),
        per_alpha=[float(value) for value in per_alpha],
    )


# ---------------------------------------------------------------------------
# Ground-truth preprocessing and reports


def preprocess(
    pred: Sequence[Trajectory],
    annotations: Iterable[AnnotatedBox],
    visibility_thresh: float = 0.0,
    iou_thresh: float = 0.5,
    exclude_interpolated: bool = False,
) -> Tuple[List[Trajectory], List[Trajectory]]:
    """
    Keep pedestrian ground truth and drop predictions that cover ignored annotations.

    Per frame, predictions are matched against every annotation; a prediction
    matched to a distractor class or to a pedestrian below the visibility
    threshold is removed rather than counted as a false positive.
    """
    by_frame: Dict[int, List[AnnotatedBox]] = {}
    for row in annotations:
        by_frame.setdefault(row.box.frame, []).append(row)

    ignored = set()
    pred_by_frame, _ = _by_frame(pred)
    ordered = sorted(pred, key=lambda t: t.id)
    for frame, rows in by_frame.items():
        candidates = pred_by_frame.get(frame, [])
        if not candidates:
            continue
        sim = iou_matrix([row.box for row in rows], [box for _, box in candidates])
        score = np.where(sim >= iou_thresh - EPS, sim, 0.0)
        r, c = linear_sum_assignment(-score)
        for gi, pi in zip(r, c):
            row = rows[gi]
            is_ignored = row.cls in DISTRACTOR_CLASSES or (
                row.cls == PEDESTRIAN and row.visibility < visibility_thresh
            )
            if score[gi, pi] > 0 and is_ignored:
                ignored.add((ordered[candidates[pi][0]].id, frame))

    kept_pred = []
    for track in pred:
        boxes = {
            frame: box
            for frame, box in track.boxes.items()
            if (track.id, frame) not in ignored and not (
                exclude_interpolated and box.interpolated
            )
        }
        if boxes:
            kept_pred.append(Trajectory(track.id, boxes))

    gt_boxes: Dict[int, Dict[int, BoundingBox]] = {}
    for rows in by_frame.values():
        for row in rows:
            if (
                row.cls == PEDESTRIAN
                and row.flag != 0
                and row.visibility >= visibility_thresh
            ):
                gt_boxes.setdefault(row.track_id, {})[row.box.frame] = row.box
    gt = [Trajectory(track_id, boxes) for track_id, boxes in sorted(gt_boxes.items())]
    removed = sum(len(t) for t in pred) - sum(len(t) for t in kept_pred)
    if removed:
        logger.debug(
            "Removed %d predicted boxes matched to ignored annotations", removed
        )
    return kept_pred, gt


def evaluate(
    pred: Sequence[Trajectory],
    gt: Sequence[Trajectory],
    sequence: str = "",
    scene_kind: SceneKind = SceneKind.STATIC,
    iou_thresh: float = 0.5,
    detections: Optional[Detections] = None,
) -> EvalReport:
    """ Every metric for one sequence; map50 only when raw detections are given. """
    clear = clear_metrics(pred, gt, iou_thresh)
    identity = identity_metrics(pred, gt, iou_thresh)
    higher_order = hota(pred, gt)
    map50 = None
    if detections is not None:
        gts = {}
        for track in gt:
            for box in track:
                gts.setdefault(box.frame, []).append(box)
        map50 = average_precision(detections, gts, iou_thresh)
    return EvalReport(
        sequence=sequence,
        scene_kind=scene_kind.value,
        map50=map50,
        mota=clear.mota,
        motp=clear.motp,
        idf1=identity.idf1,
        idp=identity.idp,
        idr=identity.idr,
        hota=higher_order.hota,
        deta=higher_order.deta,
        assa=higher_order.assa,
        idsw=clear.idsw,
        fp=clear.fp,
        fn=clear.fn,
        gt_count=clear.gt_count,
        identities=len(pred),
    )


def _mean(values: List[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def combine(reports: Sequence[EvalReport]) -> Dict[str, Optional[float]]:
    """
    Aggregate per-sequence reports: HOTA, HOTA-S and HOTA-D are means over all,
    static and dynamic sequences; counts are summed and MOTA recomputed from them.
    """
    if not reports:
        raise MetricUndefined("No sequence reports to combine")
    gt_count = sum(r.gt_count for r in reports)
    fp = sum(r.fp for r in reports)
    fn = sum(r.fn for r in reports)
    idsw = sum(r.idsw for r in reports)
    maps = [r.map50 for r in reports if r.map50 is not None]
    return {
        "hota": _mean([r.hota for r in reports]),
        "hota_s": _mean(
            [r.hota for r in reports if r.scene_kind == SceneKind.STATIC.value]
        ),
        "hota_d": _mean(
            [r.hota for r in reports if r.scene_kind == SceneKind.DYNAMIC.value]
        ),
        "deta": _mean([r.deta for r in reports]),
        "assa": _mean([r.assa for r in reports]),
        "idf1": _mean([r.idf1 for r in reports]),
        "mota": 1.0 - (fp + fn + idsw) / max(1, gt_count),
        "map50": _mean(maps),
        "idsw": idsw,
        "fp": fp,
        "fn": fn,
    }
