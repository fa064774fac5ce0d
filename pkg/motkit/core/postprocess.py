"""
Offline trajectory repair: linear interpolation, Gaussian-smoothed
interpolation (GSI), short-track pruning and track merging.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from motkit.core.boxes import BoundingBox, SequenceMeta, Trajectory
from motkit.core.exceptions import ConfigError, NumericalFailure, SceneKindError

logger = logging.getLogger(__name__)

MERGE = "merge"
INTERPOLATE = "interpolate"
GSI = "gsi"
PRUNE = "prune"
STEPS = (MERGE, INTERPOLATE, GSI, PRUNE)

# Cholesky retries: jitter added to the diagonal, relative to the kernel scale.
_REGULARIZATION = (1e-8, 1e-6, 1e-4)


@dataclass(frozen=True)
class MergeParams:
    max_gap: int = 90
    # None means dist_scale * mean box height of the lost track
    dist_thresh: Optional[float] = None
    dist_scale: float = 0.5
    area_ratio: float = 1.6
    velocity_window: int = 10

    def __post_init__(self) -> None:
        if self.max_gap < 1:
            raise ConfigError(
                "postprocess.merge_max_gap", f"must be >= 1, got {self.max_gap}"
            )
        if self.area_ratio < 1.0:
            raise ConfigError(
                "postprocess.merge_area_ratio", f"must be >= 1, got {self.area_ratio}"
            )
        if self.velocity_window < 1:
            raise ConfigError(
                "postprocess.merge_velocity_window",
                f"must be >= 1, got {self.velocity_window}",
            )


@dataclass(frozen=True)
class PostprocessConfig:
    steps: Tuple[str, ...] = STEPS
    # None means the tracker's track_buffer
    interpolate_max_gap: Optional[int] = None
    gsi_tau: float = 10.0
    gsi_noise: float = 1e-2
    min_len: int = 10
    merge: MergeParams = MergeParams()

    def __post_init__(self) -> None:
        unknown = [step for step in self.steps if step not in STEPS]
        if unknown:
            raise ConfigError(
                "postprocess.steps",
                f"unknown steps {unknown}, choose from {list(STEPS)}",
            )
        if self.gsi_tau <= 0:
            raise ConfigError(
                "postprocess.gsi_tau", f"must be positive, got {self.gsi_tau}"
            )
        if self.gsi_noise < 0:
            raise ConfigError(
                "postprocess.gsi_noise", f"must be non-negative, got {self.gsi_noise}"
            )
        if self.min_len < 1:
            raise ConfigError(
                "postprocess.min_len", f"must be >= 1, got {self.min_len}"
            )


def _fill_gap(
    boxes: Dict[int, BoundingBox], start: BoundingBox, end: BoundingBox
) -> None:
    span = end.frame - start.frame
    score = (start.score + end.score) / 2.0
    for frame in range(start.frame + 1, end.frame):
        t = (frame - start.frame) / span
        boxes[frame] = BoundingBox(
            start.x + t * (end.x - start.x),
            start.y + t * (end.y - start.y),
            start.w + t * (end.w - start.w),
            start.h + t * (end.h - start.h),
            score=score,
            frame=frame,
            interpolated=True,
        )


def linear_interpolate(track: Trajectory, max_gap: int) -> Trajectory:
    """ Fill every gap of at most max_gap missing frames. Observed boxes stay as is. """
    if max_gap < 1:
        raise ConfigError(
            "postprocess.interpolate_max_gap", f"must be >= 1, got {max_gap}"
        )
    boxes = dict(track.boxes)
    observed = list(track.boxes.values())
    for start, end in zip(observed, observed[1:]):
        missing = end.frame - start.frame - 1
        if 0 < missing <= max_gap:
            _fill_gap(boxes, start, end)
    return Trajectory(track.id, boxes)


def _rbf_kernel(a: np.ndarray, b: np.ndarray, tau: float) -> np.ndarray:
    return np.exp(-np.square(a[:, None] - b[None, :]) / (2.0 * tau * tau))


def _gp_solve(kernel: np.ndarray, targets: np.ndarray, noise: float) -> np.ndarray:
    n = len(kernel)
    system = kernel + noise * np.eye(n)
    for jitter in (0.0,) + _REGULARIZATION:
        try:
            factor = scipy.linalg.cho_factor(system + jitter * np.eye(n), lower=True)
            return scipy.linalg.cho_solve(factor, targets)
        except np.linalg.LinAlgError:
            logger.debug(
                "GP kernel not positive definite, retrying with jitter %g", jitter
            )
    raise NumericalFailure("GSI kernel matrix is numerically singular")


def gsi_smooth(track: Trajectory, tau: float = 10.0, noise: float = 1e-2) -> Trajectory:
    """
    Gaussian-process smoothing of each box coordinate over frame index.

    The posterior mean is evaluated at every frame from first to last, so gaps
    are filled too. The regression is zero-mean on coordinates centered on
    their observed mean, solved with a Cholesky factor of K + noise * I, and
    the mean is added back to the posterior.
    """
    if not len(track):
        raise ConfigError("postprocess", "cannot smooth an empty trajectory")
    if tau <= 0:
        raise ConfigError("postprocess.gsi_tau", f"must be positive, got {tau}")
    observed = list(track.boxes.values())
    t_obs = np.array([box.frame for box in observed], dtype=float)
    coords = np.array([box.tlwh for box in observed])
    offset = coords.mean(axis=0)

    t_all = np.arange(track.first_frame, track.last_frame + 1, dtype=float)
    alpha = _gp_solve(_rbf_kernel(t_obs, t_obs, tau), coords - offset, noise)
    smoothed = _rbf_kernel(t_all, t_obs, tau) @ alpha + offset

    scores = np.interp(t_all, t_obs, [box.score for box in observed])
    boxes = {}
    for frame, (x, y, w, h), score in zip(t_all.astype(int), smoothed, scores):
        source = track.boxes.get(int(frame))
        boxes[int(frame)] = BoundingBox(
            float(x),
            float(y),
            max(float(w), 1e-3),
            max(float(h), 1e-3),
            score=float(np.clip(score, 0.0, 1.0)),
            frame=int(frame),
            interpolated=source is None or source.interpolated,
        )
    return Trajectory(track.id, boxes)


def prune_short(tracks: Sequence[Trajectory], min_len: int) -> List[Trajectory]:
    """ Drop tracks with fewer than min_len observed frames. """
    if min_len < 1:
        raise ConfigError("postprocess.min_len", f"must be >= 1, got {min_len}")
    return [track for track in tracks if track.observed_count >= min_len]


def _mean_velocity(track: Trajectory, window: int) -> np.ndarray:
    observed = [box for box in track if not box.interpolated][-window:]
    if len(observed) < 2:
        return np.zeros(2)
    first, last = observed[0], observed[-1]
    return (last.center - first.center) / (last.frame - first.frame)


def _merge_candidates(
    lost: Trajectory, tracks: Sequence[Trajectory], params: MergeParams
) -> List[Tuple[float, int, Trajectory]]:
    end = lost.last_box
    velocity = _mean_velocity(lost, params.velocity_window)
    if params.dist_thresh is None:
        dist_thresh = params.dist_scale * float(np.mean([box.h for box in lost]))
    else:
        dist_thresh = params.dist_thresh

    candidates = []
    for other in tracks:
        gap = other.first_frame - lost.last_frame
        if other is lost or not 0 < gap <= params.max_gap:
            continue
        start = other.first_box
        predicted = end.center + velocity * gap
        distance = float(np.hypot(*(start.center - predicted)))
        ratio = start.area / end.area
        similar_size = 1.0 / params.area_ratio <= ratio <= params.area_ratio
        if distance <= dist_thresh and similar_size:
            candidates.append((distance, gap, other))
    return sorted(candidates, key=lambda item: (item[0], item[1], item[2].id))


def merge_tracks(
    tracks: Sequence[Trajectory],
    meta: SequenceMeta,
    params: MergeParams = MergeParams(),
) -> List[Trajectory]:
    """
    Link tracks that end to tracks that start nearby shortly after, then fill
    the merged gaps.

    Only valid for static scenes. Each lost track is linked to its closest
    admissible successor; lost tracks are handled in ascending order of the gap
    to that successor, and links chain transitively.
    """
    if meta.is_dynamic:
        raise SceneKindError(
            "Track merge only supports static scenes", sequence=meta.name, stage=MERGE
        )
    tracks = sorted(tracks, key=lambda track: (track.first_frame, track.id))
    proposals = {
        id(track): _merge_candidates(track, tracks, params) for track in tracks
    }
    order = sorted(
        (track for track in tracks if proposals[id(track)]),
        key=lambda track: (
            proposals[id(track)][0][1], proposals[id(track)][0][0], track.id
        ),
    )

    successor: Dict[int, Trajectory] = {}
    claimed = set()
    for lost in order:
        for _, _, candidate in proposals[id(lost)]:
            if id(candidate) not in claimed:
                successor[id(lost)] = candidate
                claimed.add(id(candidate))
                break

    merged = []
    for head in tracks:
        if id(head) in claimed:
            continue
        boxes = dict(head.boxes)
        current = head
        while id(current) in successor:
            following = successor[id(current)]
            _fill_gap(boxes, current.last_box, following.first_box)
            boxes.update(following.boxes)
            current = following
        merged.append(Trajectory(head.id, boxes))
    logger.info(
        "%s: merged %d tracks into %d identities", meta.name, len(tracks), len(merged)
    )
    return sorted(merged, key=lambda track: track.id)


def run_postprocess(
    tracks: Sequence[Trajectory],
    meta: SequenceMeta,
    cfg: PostprocessConfig,
    track_buffer: int = 30,
) -> List[Trajectory]:
    """ Apply the configured steps in order. Merge is skipped on dynamic scenes. """
    tracks = list(tracks)
    max_gap = cfg.interpolate_max_gap or track_buffer
    for step in cfg.steps:
        if step == MERGE:
            if meta.is_dynamic:
                logger.info("%s: dynamic scene, skipping track merge", meta.name)
                continue
            tracks = merge_tracks(tracks, meta, cfg.merge)
        elif step == INTERPOLATE:
            tracks = [linear_interpolate(track, max_gap) for track in tracks]
        elif step == GSI:
            tracks = [gsi_smooth(track, cfg.gsi_tau, cfg.gsi_noise) for track in tracks]
        elif step == PRUNE:
            tracks = prune_short(tracks, cfg.min_len)
    return tracks
