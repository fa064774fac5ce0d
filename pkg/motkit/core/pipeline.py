"""
Per-sequence stages chained into the tracking pipeline:

    prepare (full box) -> track -> postprocess -> evaluate

Stages exchange trajectories through the MOT text format, so running them
in one process gives exactly what running them one file at a time gives.
"""
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from motkit.core.association import ByteTracker
from motkit.core.boxes import BoundingBox, Trajectory
from motkit.core.config import (
    FULLBOX_HEIGHT,
    FULLBOX_OFF,
    Components,
    PipelineConfig,
    SequenceConfig,
    resolve_sequence,
)
from motkit.core.ensemble import fuse_frames
from motkit.core.exceptions import DataError, MotkitError
from motkit.core.fullbox import (
    Anchor,
    AspectRatioMode,
    HeightModelMode,
    extend_box,
    extract_height_samples,
    fit_height_model,
)
from motkit.core.metrics import EvalReport, evaluate, preprocess
from motkit.core.postprocess import run_postprocess
from motkit.moio.files import (
    SequenceFiles,
    parse_interpolated,
    parse_tracks,
    write_interpolated,
    write_tracks,
)

logger = logging.getLogger(__name__)

Detections = Dict[int, List[BoundingBox]]
HeightSamples = Sequence[Tuple[float, float]]

PREPARE = "prepare"
TRACK = "track"
POSTPROCESS = "postprocess"
EVALUATE = "eval"

# Cumulative rows, in the order components are usually reported.
ABLATION_GRID = (
    Components(fullbox=False, compensation=False, interpolation=False, merge=False),
    Components(fullbox=True, compensation=False, interpolation=False, merge=False),
    Components(fullbox=True, compensation=True, interpolation=False, merge=False),
    Components(fullbox=True, compensation=True, interpolation=True, merge=False),
    Components(fullbox=True, compensation=True, interpolation=True, merge=True),
)


@dataclass
class SequenceRun:
    config: SequenceConfig
    raw_tracks: List[Trajectory] = field(default_factory=list)
    tracks: List[Trajectory] = field(default_factory=list)
    report: Optional[EvalReport] = None


@contextmanager
def _stage(name: str, sequence: str) -> Iterator[None]:
    """ Attach the sequence and stage to any toolkit error raised inside. """
    try:
        yield
    except MotkitError as exc:
        raise exc.located(sequence, name)


def through_file(tracks: Sequence[Trajectory]) -> List[Trajectory]:
    """ What a later stage reads back after this stage writes its result file. """
    return parse_tracks(
        write_tracks(tracks),
        interpolated=parse_interpolated(write_interpolated(tracks)),
    )


def _height_mode(
    dets: Detections, cfg: SequenceConfig, height_samples: Optional[HeightSamples]
) -> HeightModelMode:
    """ Fit from the given (top y, h) samples, else from confident unclipped boxes. """
    if height_samples is not None:
        by_anchor = {
            Anchor.TOP_Y: list(height_samples),
            Anchor.BOTTOM_Y: [(y + h, h) for y, h in height_samples],
        }
    else:
        if cfg.fullbox.height_samples is not None:
            pool = dets.get(cfg.fullbox.height_samples, [])
        else:
            pool = [det for frame_dets in dets.values() for det in frame_dets]
        settings = cfg.fullbox
        by_anchor = {
            anchor: extract_height_samples(
                pool, cfg.meta, anchor, settings.min_sample_score, settings.clip_margin
            )
            for anchor in Anchor
        }
    models = {
        anchor: fit_height_model(samples, anchor)
        for anchor, samples in by_anchor.items()
    }
    return HeightModelMode(
        top_model=models[Anchor.TOP_Y], bottom_model=models[Anchor.BOTTOM_Y]
    )


def prepare_detections(
    dets: Detections,
    cfg: SequenceConfig,
    height_samples: Optional[HeightSamples] = None,
) -> Detections:
    """ Extend border-clipped detections to full boxes in the configured mode. """
    if cfg.fullbox.mode == FULLBOX_OFF:
        return dets
    with _stage(PREPARE, cfg.meta.name):
        if cfg.fullbox.mode == FULLBOX_HEIGHT:
            mode = _height_mode(dets, cfg, height_samples)
        else:
            mode = AspectRatioMode(cfg.fullbox.aspect_ratio)
        return {
            frame: [
                extend_box(det, cfg.meta, mode, cfg.fullbox.clip_margin)
                for det in frame_dets
            ]
            for frame, frame_dets in dets.items()
        }


def track_sequence(dets: Detections, cfg: SequenceConfig) -> List[Trajectory]:
    with _stage(TRACK, cfg.meta.name):
        last_frame = max(dets, default=0)
        if last_frame > cfg.meta.length:
            logger.warning(
                "%s: detections run to frame %d past seqLength %d",
                cfg.meta.name,
                last_frame,
                cfg.meta.length,
            )
        tracker = ByteTracker(cfg.tracker, cfg.meta)
        for frame in range(1, max(last_frame, cfg.meta.length) + 1):
            tracker.step(dets.get(frame, []), frame)
        tracks = tracker.trajectories()
    logger.info(
        "%s: %d tracks over %d frames", cfg.meta.name, len(tracks), cfg.meta.length
    )
    return tracks


def postprocess_sequence(
    tracks: Sequence[Trajectory], cfg: SequenceConfig
) -> List[Trajectory]:
    with _stage(POSTPROCESS, cfg.meta.name):
        return run_postprocess(
            tracks, cfg.meta, cfg.postprocess, cfg.tracker.track_buffer
        )


def evaluate_sequence(
    tracks: Sequence[Trajectory],
    files: SequenceFiles,
    cfg: SequenceConfig,
    with_ap: bool = False,
) -> EvalReport:
    with _stage(EVALUATE, cfg.meta.name):
        if files.annotations is None:
            raise DataError(f"No ground truth under {files.root}")
        pred, gt = preprocess(
            tracks,
            files.annotations,
            visibility_thresh=cfg.metrics.visibility_thresh,
            iou_thresh=cfg.metrics.iou_thresh,
            exclude_interpolated=cfg.metrics.exclude_interpolated,
        )
        detections = files.primary_detections if with_ap else None
        return evaluate(
            pred,
            gt,
            cfg.meta.name,
            cfg.meta.scene_kind,
            cfg.metrics.iou_thresh,
            detections,
        )


def ensemble_detections(files: SequenceFiles, cfg: PipelineConfig) -> Detections:
    settings = cfg.ensemble
    with _stage("ensemble", files.name):
        return fuse_frames(
            list(files.detections.values()),
            method=settings.method,
            model_weights=settings.weights or None,
            iou_thresh=settings.iou_thresh,
            score_thresh=settings.score_thresh,
        )


def run_sequence(
    files: SequenceFiles,
    cfg: PipelineConfig,
    components: Components = Components(),
    detections: Optional[Detections] = None,
    evaluate_tracks: bool = True,
) -> SequenceRun:
    """ The fused pipeline for one sequence. """
    seq_cfg = resolve_sequence(cfg, files.meta, files.warps, components)
    run = SequenceRun(seq_cfg)
    dets = prepare_detections(
        files.primary_detections if detections is None else detections,
        seq_cfg,
        files.height_samples,
    )
    run.raw_tracks = through_file(track_sequence(dets, seq_cfg))
    run.tracks = through_file(postprocess_sequence(run.raw_tracks, seq_cfg))
    if evaluate_tracks and files.annotations is not None:
        run.report = evaluate_sequence(run.tracks, files, seq_cfg)
    return run


def ablation_rows(
    files: SequenceFiles, cfg: PipelineConfig
) -> List[Tuple[str, EvalReport]]:
    """ One report per component combination, plus a multi-model ensemble row. """
    rows = []
    for components in ABLATION_GRID:
        rows.append((components.label(), run_sequence(files, cfg, components).report))
    if len(files.detections) > 1:
        fused = ensemble_detections(files, cfg)
        rows.append(
            (
                "ensemble+" + Components().label(),
                run_sequence(files, cfg, detections=fused).report,
            )
        )
    return rows


TABLE_COLUMNS = (
    ("HOTA", "hota"),
    ("HOTA-S", "hota_s"),
    ("HOTA-D", "hota_d"),
    ("IDF1", "idf1"),
    ("MOTA", "mota"),
)


def format_table(rows: Sequence[Tuple[str, Dict[str, Optional[float]]]]) -> str:
    """ Scores as percentages, one row per configuration. """
    label_width = max([len("Components")] + [len(label) for label, _ in rows])
    header = "Components".ljust(label_width) + "".join(
        title.rjust(9) for title, _ in TABLE_COLUMNS
    )
    lines = [header, "-" * len(header)]
    for label, combined in rows:
        cells = []
        for _, key in TABLE_COLUMNS:
            value = combined.get(key)
            cells.append(("-" if value is None else f"{100.0 * value:.1f}").rjust(9))
        lines.append(label.ljust(label_width) + "".join(cells))
    return "\n".join(lines)
