"""
BYTE-style two-round association with confidence adjustments and the track lifecycle.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from motkit.core.boxes import (
    BoundingBox,
    SequenceMeta,
    Trajectory,
    from_xyah,
    iou_matrix,
    to_xyah,
)
from motkit.core.exceptions import ConfigError, OutOfOrderFrame
from motkit.core.motion import KalmanFilter, KalmanTrackState, WarpTable

logger = logging.getLogger(__name__)

# Worth added to lower rows so equal matchings always resolve the same way.
TIE_BREAK = 1e-12


class TrackState(enum.Enum):
    TENTATIVE = "tentative"
    TRACKED = "tracked"
    LOST = "lost"
    REMOVED = "removed"


@dataclass(frozen=True)
class TrackerConfig:
    high_thresh: float = 0.6
    low_thresh: float = 0.1
    # None means high_thresh + 0.1
    new_track_thresh: Optional[float] = None
    # Both gates are on cost = 1 - similarity, as in the upstream tracker.
    match_thresh_round1: float = 0.8
    match_thresh_round2: float = 0.5
    track_buffer: int = 30
    fuse_score: bool = False
    border_margin: float = 10.0
    # None means high_thresh
    border_score_floor: Optional[float] = None
    nsa: bool = True
    min_hits: int = 1
    warps: Optional[WarpTable] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.low_thresh < self.high_thresh <= 1.0:
            thresholds = f"{self.low_thresh} / {self.high_thresh}"
            raise ConfigError(
                "tracker.low_thresh",
                f"need 0 <= low_thresh < high_thresh <= 1, got {thresholds}",
            )
        if self.track_buffer < 1:
            raise ConfigError(
                "tracker.track_buffer", f"must be >= 1, got {self.track_buffer}"
            )
        if self.min_hits < 1:
            raise ConfigError("tracker.min_hits", f"must be >= 1, got {self.min_hits}")
        if self.border_margin < 0:
            raise ConfigError(
                "tracker.border_margin", f"must be >= 0, got {self.border_margin}"
            )

    @property
    def resolved_new_track_thresh(self) -> float:
        if self.new_track_thresh is None:
            return min(1.0, self.high_thresh + 0.1)
        return self.new_track_thresh

    @property
    def resolved_border_score_floor(self) -> float:
        if self.border_score_floor is None:
            return self.high_thresh
        return self.border_score_floor


@dataclass
class Track:
    id: int
    state: TrackState
    kalman: KalmanTrackState
    history: Trajectory
    frames_lost: int = 0
    last_score: float = 0.0
    hits: int = 1

    @property
    def is_live(self) -> bool:
        return self.state is not TrackState.REMOVED

    def predicted_box(self) -> BoundingBox:
        return from_xyah(self.kalman.mean[:4], score=self.last_score)


def adjust_border_confidence(
    dets: Sequence[BoundingBox], meta: SequenceMeta, margin: float, floor: float
) -> List[BoundingBox]:
    """ Raise detections near an image border to at least `floor`. """
    adjusted = []
    for det in dets:
        near_border = (
            det.x <= margin
            or det.y <= margin
            or det.right >= meta.width - margin
            or det.bottom >= meta.height - margin
        )
        if near_border and det.score < floor:
            det = det.replace(score=floor)
        adjusted.append(det)
    return adjusted


def similarity_matrix(
    tracks: Sequence[BoundingBox], dets: Sequence[BoundingBox], fuse_score: bool
) -> np.ndarray:
    similarity = iou_matrix(tracks, dets)
    if fuse_score and similarity.size:
        similarity = similarity * np.array([det.score for det in dets])[None, :]
    return similarity


def solve_assignment(
    cost: np.ndarray, max_cost: float
) -> Tuple[List[Tuple[int, int]], List[int], List[int]]:
    """
    Minimum-cost partial matching; pairs costing more than max_cost are never matched.

    Each matched pair is worth (max_cost - cost), leaving a row or column unmatched
    is worth nothing, and the matching maximising the total worth is returned.
    Among equally worthy matchings the one using the lowest row indices wins.
    """
    cost = np.asarray(cost, dtype=float)
    rows, cols = cost.shape if cost.ndim == 2 else (0, 0)
    if rows == 0 or cols == 0:
        return [], list(range(rows)), list(range(cols))
    allowed = cost <= max_cost
    gain = np.where(allowed, max_cost - cost, 0.0)
    scale = TIE_BREAK * max(1.0, float(gain.max()))
    bonus = scale * (rows - np.arange(rows))[:, None] / rows
    row_ind, col_ind = linear_sum_assignment(
        np.where(allowed, gain + bonus, 0.0), maximize=True
    )
    matches = [
        (int(r), int(c)) for r, c in zip(row_ind, col_ind) if cost[r, c] <= max_cost
    ]
    matched_rows = {r for r, _ in matches}
    matched_cols = {c for _, c in matches}
    unmatched_rows = [r for r in range(rows) if r not in matched_rows]
    unmatched_cols = [c for c in range(cols) if c not in matched_cols]
    return sorted(matches), unmatched_rows, unmatched_cols


class ByteTracker:
    """
    Single-sequence tracker. Feed frames in strictly increasing order with step().

    Usage:
        >> tracker = ByteTracker(TrackerConfig(), meta)
        >> for frame in range(1, meta.length + 1):
        ..     emitted = tracker.step(detections.get(frame, []), frame)
        >> trajectories = tracker.trajectories()
    """

    def __init__(
        self, cfg: TrackerConfig, meta: SequenceMeta, kalman_filter: KalmanFilter = None
    ) -> None:
        self.cfg = cfg
        self.meta = meta
        self.kalman_filter = kalman_filter or KalmanFilter()
        self.tracks: List[Track] = []
        self.frame = 0
        self._next_id = 1

    @property
    def live_tracks(self) -> List[Track]:
        return [track for track in self.tracks if track.is_live]

    def step(
        self, dets: Sequence[BoundingBox], frame: int
    ) -> List[Tuple[int, BoundingBox]]:
        if frame <= self.frame:
            raise OutOfOrderFrame(f"Frame {frame} presented after frame {self.frame}")
        self.frame = frame
        cfg = self.cfg
        live = self.live_tracks

        # 1. camera motion, dynamic scenes only
        if cfg.warps and self.meta.is_dynamic:
            warp = cfg.warps.get(frame)
            if warp is not None:
                for track in live:
                    track.kalman = self.kalman_filter.apply_warp(track.kalman, warp)

        # 2. predict
        for track in live:
            if track.state is not TrackState.TRACKED:
                mean = track.kalman.mean.copy()
                mean[7] = 0.0
                track.kalman = KalmanTrackState(mean, track.kalman.covariance)
            track.kalman = self.kalman_filter.predict(track.kalman)

        # 3-4. border confidence, high/low split
        dets = adjust_border_confidence(
            dets, self.meta, cfg.border_margin, cfg.resolved_border_score_floor
        )
        high = [det for det in dets if det.score >= cfg.high_thresh]
        low = [det for det in dets if cfg.low_thresh <= det.score < cfg.high_thresh]

        # 5. round one: every live track against high detections
        pool = live
        sim = similarity_matrix([t.predicted_box() for t in pool], high, cfg.fuse_score)
        matches, unmatched_rows, unmatched_high = solve_assignment(
            1.0 - sim, cfg.match_thresh_round1
        )
        matched = [(pool[r], high[c]) for r, c in matches]

        # 6. round two: tracks that were being tracked against low detections
        remaining = [pool[r] for r in unmatched_rows]
        second_pool = [
            t
            for t in remaining
            if t.state in (TrackState.TRACKED, TrackState.TENTATIVE)
        ]
        sim = similarity_matrix(
            [t.predicted_box() for t in second_pool], low, fuse_score=False
        )
        matches, unmatched_second, _ = solve_assignment(
            1.0 - sim, cfg.match_thresh_round2
        )
        matched += [(second_pool[r], low[c]) for r, c in matches]
        still_unmatched = {id(second_pool[r]) for r in unmatched_second}
        unmatched = [
            t
            for t in remaining
            if t.state is TrackState.LOST or id(t) in still_unmatched
        ]

        # 7. matched tracks
        emitted = []
        for track, det in matched:
            track.kalman = self.kalman_filter.update(
                track.kalman, to_xyah(det), score=det.score, nsa=cfg.nsa
            )
            track.frames_lost = 0
            track.last_score = det.score
            track.hits += 1
            if track.state is not TrackState.TENTATIVE or track.hits >= cfg.min_hits:
                track.state = TrackState.TRACKED
            box = from_xyah(track.kalman.mean[:4], score=det.score, frame=frame)
            if track.state is TrackState.TRACKED:
                track.history.add(box)
                emitted.append((track.id, box))

        # 8. unmatched tracks
        for track in unmatched:
            if track.state is TrackState.TENTATIVE:
                track.state = TrackState.REMOVED
                continue
            track.state = TrackState.LOST
            track.frames_lost += 1
            if track.frames_lost > cfg.track_buffer:
                track.state = TrackState.REMOVED
                logger.debug("Track %d removed at frame %d", track.id, frame)

        # 9. births
        matched_dets = {id(det) for _, det in matched}
        for det in high:
            if id(det) in matched_dets or det.score < cfg.resolved_new_track_thresh:
                continue
            track = self._start_track(det, frame)
            if track.state is TrackState.TRACKED:
                emitted.append((track.id, track.history.last_box))

        return sorted(emitted, key=lambda item: item[0])

    def _start_track(self, det: BoundingBox, frame: int) -> Track:
        state = TrackState.TRACKED if self.cfg.min_hits <= 1 else TrackState.TENTATIVE
        track = Track(
            id=self._next_id,
            state=state,
            kalman=self.kalman_filter.initiate(to_xyah(det)),
            history=Trajectory(self._next_id),
            last_score=det.score,
        )
        self._next_id += 1
        if state is TrackState.TRACKED:
            track.history.add(det.replace(frame=frame))
        self.tracks.append(track)
        return track

    def trajectories(self) -> List[Trajectory]:
        """ Emitted history of every track that produced at least one box. """
        return [track.history for track in self.tracks if len(track.history)]


def byte_step(
    tracker: ByteTracker, dets: Sequence[BoundingBox], frame: int
) -> List[Tuple[int, BoundingBox]]:
    return tracker.step(dets, frame)
