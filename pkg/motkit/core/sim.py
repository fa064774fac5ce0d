"""
Synthetic pedestrian sequences: ground truth, noisy detections and camera warps.

Everything is drawn from one numpy Generator seeded by SimConfig.seed, so a
config fully determines its output.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from motkit.core.boxes import BoundingBox, SceneKind, SequenceMeta, Trajectory, iou
from motkit.core.exceptions import ConfigError
from motkit.core.motion import WarpMatrix, WarpTable

logger = logging.getLogger(__name__)

# Pedestrian height / width, as assumed by full-box recovery.
PEDESTRIAN_ASPECT = 2.6
# Normal tracks keep their bottom edge in this share of the image height.
GROUND_BAND = (0.45, 0.95)
SIDE_MARGIN = 20.0
VERTICAL_SPEED = 0.3


@dataclass(frozen=True)
class SimConfig:
    name: str = "SIM-01"
    n_tracks: int = 8
    length: int = 200
    width: int = 1920
    height: int = 1080
    fps: float = 30.0
    speed: float = 2.0
    motion_noise: float = 0.0
    jitter: float = 0.0
    drop_prob: float = 0.0
    fp_rate: float = 0.0
    # score = clamp(1 - score_beta * (1 - IoU) + N(0, score_noise))
    score_beta: float = 1.0
    score_noise: float = 0.05
    fp_score_beta: Tuple[float, float] = (2.0, 5.0)
    height_slope: float = 0.25
    height_intercept: float = 20.0
    clip_at_border: bool = False
    clip_fraction: float = 0.0
    camera_pan: Tuple[float, float] = (0.0, 0.0)
    pan_jitter: float = 0.0
    gap_prob: float = 0.0
    gap_length: int = 0
    stagger_starts: bool = True
    min_lifetime: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        for key in ("n_tracks", "length", "width", "height", "min_lifetime"):
            if getattr(self, key) < 1:
                raise ConfigError(
                    f"sim.{key}", f"must be positive, got {getattr(self, key)}"
                )
        for key in ("drop_prob", "clip_fraction", "gap_prob"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise ConfigError(
                    f"sim.{key}", f"must be a probability, got {getattr(self, key)}"
                )
        for key in (
            "motion_noise",
            "jitter",
            "fp_rate",
            "score_noise",
            "pan_jitter",
            "speed",
            "gap_length",
        ):
            if getattr(self, key) < 0:
                raise ConfigError(
                    f"sim.{key}", f"must be non-negative, got {getattr(self, key)}"
                )
        if self.min_lifetime > self.length:
            raise ConfigError(
                "sim.min_lifetime", f"cannot exceed the sequence length {self.length}"
            )
        if min(self.fp_score_beta) <= 0:
            raise ConfigError("sim.fp_score_beta", "Beta parameters must be positive")

    @property
    def scene_kind(self) -> SceneKind:
        moving = any(self.camera_pan) or self.pan_jitter > 0
        return SceneKind.DYNAMIC if moving else SceneKind.STATIC

    @property
    def meta(self) -> SequenceMeta:
        return SequenceMeta(
            self.name, self.width, self.height, self.fps, self.length, self.scene_kind
        )


@dataclass
class SimulatedSequence:
    meta: SequenceMeta
    gt: List[Trajectory]
    dets: Dict[int, List[BoundingBox]]
    warps: WarpTable = field(default_factory=dict)
    # frames per track id where detections were forcibly withheld
    occlusions: Dict[int, Tuple[int, int]] = field(default_factory=dict)

    @property
    def detection_count(self) -> int:
        return sum(len(boxes) for boxes in self.dets.values())


def _height(cfg: SimConfig, bottom: float) -> float:
    return cfg.height_slope * bottom + cfg.height_intercept


def _feasible_start(
    rng: np.random.Generator, lo: float, hi: float, shift: float, preferred=None
) -> float:
    start_lo, start_hi = lo - min(0.0, shift), hi - max(0.0, shift)
    if preferred is not None:
        lane_lo, lane_hi = max(start_lo, preferred[0]), min(start_hi, preferred[1])
        if lane_lo < lane_hi:
            start_lo, start_hi = lane_lo, lane_hi
    return float(rng.uniform(start_lo, start_hi))


def _camera_offsets(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """ Camera position per frame (index 0 = frame 1): steady pan plus shake. """
    frames = np.arange(cfg.length, dtype=float)[:, None]
    offsets = frames * np.asarray(cfg.camera_pan, dtype=float)[None, :]
    if cfg.pan_jitter > 0:
        offsets = offsets + rng.normal(0.0, cfg.pan_jitter, size=(cfg.length, 2))
    return offsets


def _ground_truth(
    cfg: SimConfig, rng: np.random.Generator, camera: np.ndarray
) -> List[Trajectory]:
    band_lo, band_hi = (fraction * cfg.height for fraction in GROUND_BAND)
    lane_size = (band_hi - band_lo) / cfg.n_tracks
    lanes = rng.permutation(cfg.n_tracks)
    tracks = []
    for index in range(cfg.n_tracks):
        if cfg.stagger_starts:
            start = int(rng.integers(1, cfg.length - cfg.min_lifetime + 2))
            end = int(rng.integers(start + cfg.min_lifetime - 1, cfg.length + 1))
        else:
            start, end = 1, cfg.length
        steps = end - start

        along_bottom = rng.random() < cfg.clip_fraction
        if along_bottom:
            # bottom edge sits 15-40% of the box height below the image
            overshoot = rng.uniform(0.15, 0.4)
            h = (cfg.height_slope * cfg.height + cfg.height_intercept) / (
                1.0 - cfg.height_slope * overshoot
            )
            bottom, vy = cfg.height + overshoot * h, 0.0
        else:
            vy = float(rng.uniform(-VERTICAL_SPEED, VERTICAL_SPEED))
            lane = (
                band_lo + lanes[index] * lane_size,
                band_lo + (lanes[index] + 1) * lane_size,
            )
            bottom = _feasible_start(rng, band_lo, band_hi, vy * steps, preferred=lane)

        h_max = _height(cfg, max(bottom, bottom + vy * steps))
        half_w = h_max / PEDESTRIAN_ASPECT / 2.0
        x_lo, x_hi = SIDE_MARGIN + half_w, cfg.width - SIDE_MARGIN - half_w
        vx = float(rng.uniform(-cfg.speed, cfg.speed))
        if steps and abs(vx) * steps > 0.9 * (x_hi - x_lo):
            vx = np.sign(vx) * 0.9 * (x_hi - x_lo) / steps
        cx = _feasible_start(rng, x_lo, x_hi, vx * steps)

        boxes = {}
        for frame in range(start, end + 1):
            h = _height(cfg, bottom)
            w = h / PEDESTRIAN_ASPECT
            shift = camera[frame - 1]
            boxes[frame] = BoundingBox(
                cx - w / 2.0 - shift[0],
                bottom - h - shift[1],
                w,
                h,
                score=1.0,
                frame=frame,
            )
            cx += vx
            bottom += vy
            if cfg.motion_noise > 0:
                cx = float(np.clip(cx + rng.normal(0.0, cfg.motion_noise), x_lo, x_hi))
                if not along_bottom:
                    bottom = float(
                        np.clip(
                            bottom + rng.normal(0.0, cfg.motion_noise), band_lo, band_hi
                        )
                    )
        tracks.append(Trajectory(index + 1, boxes))
    return tracks


def _clip_to_image(box: BoundingBox, cfg: SimConfig):
    x1, y1 = max(box.x, 0.0), max(box.y, 0.0)
    x2, y2 = min(box.right, float(cfg.width)), min(box.bottom, float(cfg.height))
    if x2 - x1 < 1.0 or y2 - y1 < 1.0:
        return None
    return box.replace(x=x1, y=y1, w=x2 - x1, h=y2 - y1)


def _detect(gt_box: BoundingBox, cfg: SimConfig, rng: np.random.Generator):
    if cfg.jitter > 0:
        dx, dy, dw, dh = rng.normal(0.0, cfg.jitter, size=4)
        det = gt_box.replace(
            x=gt_box.x + dx,
            y=gt_box.y + dy,
            w=max(gt_box.w + dw, 1.0),
            h=max(gt_box.h + dh, 1.0),
        )
    else:
        det = gt_box
    overlap = 1.0 if det is gt_box else iou(det, gt_box)
    score = 1.0 - cfg.score_beta * (1.0 - overlap)
    if cfg.score_noise > 0:
        score += rng.normal(0.0, cfg.score_noise)
    det = det.replace(score=float(np.clip(score, 0.0, 1.0)))
    if cfg.clip_at_border:
        det = _clip_to_image(det, cfg)
    return det


def _false_positive(
    cfg: SimConfig, rng: np.random.Generator, frame: int
) -> BoundingBox:
    h = rng.uniform(60.0, min(250.0, cfg.height - 1.0))
    w = h / PEDESTRIAN_ASPECT
    return BoundingBox(
        float(rng.uniform(0.0, cfg.width - w)),
        float(rng.uniform(0.0, cfg.height - h)),
        float(w),
        float(h),
        score=float(rng.beta(*cfg.fp_score_beta)),
        frame=frame,
    )


def generate(cfg: SimConfig) -> SimulatedSequence:
    """
    Ground truth, detections and warps for one synthetic sequence.

    Ground truth is in image coordinates and never clipped. Warps map frame
    t-1 image coordinates to frame t and are only emitted for a moving camera.
    """
    rng = np.random.default_rng(cfg.seed)
    camera = _camera_offsets(cfg, rng)
    gt = _ground_truth(cfg, rng, camera)

    occlusions = {}
    for track in gt:
        if (
            cfg.gap_length
            and len(track) > cfg.gap_length + 2
            and rng.random() < cfg.gap_prob
        ):
            first = int(
                rng.integers(track.first_frame + 1, track.last_frame - cfg.gap_length)
            )
            occlusions[track.id] = (first, first + cfg.gap_length - 1)

    dets: Dict[int, List[BoundingBox]] = {}
    for frame in range(1, cfg.length + 1):
        frame_dets = []
        for track in gt:
            gt_box = track.boxes.get(frame)
            if gt_box is None:
                continue
            hidden = occlusions.get(track.id)
            if hidden and hidden[0] <= frame <= hidden[1]:
                continue
            if cfg.drop_prob and rng.random() < cfg.drop_prob:
                continue
            det = _detect(gt_box, cfg, rng)
            if det is not None:
                frame_dets.append(det)
        for _ in range(rng.poisson(cfg.fp_rate) if cfg.fp_rate else 0):
            frame_dets.append(_false_positive(cfg, rng, frame))
        if frame_dets:
            dets[frame] = frame_dets

    warps = {}
    if cfg.scene_kind is SceneKind.DYNAMIC:
        for frame in range(2, cfg.length + 1):
            dx, dy = camera[frame - 2] - camera[frame - 1]
            warps[frame] = WarpMatrix.translation_only(frame, float(dx), float(dy))

    sequence = SimulatedSequence(cfg.meta, gt, dets, warps, occlusions)
    logger.info(
        "Simulated %s: %d tracks, %d detections, %d warps",
        cfg.name,
        len(gt),
        sequence.detection_count,
        len(warps),
    )
    return sequence
