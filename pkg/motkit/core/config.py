"""
Resolved pipeline configuration and its per-sequence view.

PipelineConfig is built by motkit.core.serializers from the flat key-value
config file; SequenceConfig is what one sequence actually runs with once
its overrides and scene kind are applied.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from motkit.core.association import TrackerConfig
from motkit.core.boxes import SceneKind, SequenceMeta
from motkit.core.exceptions import ConfigError
from motkit.core.fullbox import DEFAULT_ASPECT_RATIO, DEFAULT_CLIP_MARGIN
from motkit.core.motion import WarpTable
from motkit.core.postprocess import GSI, INTERPOLATE, MERGE, PostprocessConfig
from motkit.core.search import SearchConfig
from motkit.core.sim import SimConfig

logger = logging.getLogger(__name__)

FULLBOX_ASPECT = "aspect"
FULLBOX_HEIGHT = "height"
FULLBOX_OFF = "off"
FULLBOX_MODES = (FULLBOX_ASPECT, FULLBOX_HEIGHT, FULLBOX_OFF)


@dataclass(frozen=True)
class FullboxSettings:
    mode: str = FULLBOX_ASPECT
    aspect_ratio: float = DEFAULT_ASPECT_RATIO
    clip_margin: float = DEFAULT_CLIP_MARGIN
    min_sample_score: float = 0.8
    # frame to take height samples from; None uses every frame
    height_samples: Optional[int] = None


@dataclass(frozen=True)
class EnsembleSettings:
    method: str = "wbf"
    iou_thresh: float = 0.55
    score_thresh: float = 0.05
    weights: Tuple[float, ...] = ()


@dataclass(frozen=True)
class MetricsSettings:
    iou_thresh: float = 0.5
    visibility_thresh: float = 0.0
    exclude_interpolated: bool = False


@dataclass(frozen=True)
class SequenceOverride:
    scene_kind: Optional[SceneKind] = None
    track_buffer: Optional[int] = None
    fullbox_mode: Optional[str] = None
    aspect_ratio: Optional[float] = None
    height_samples: Optional[int] = None


@dataclass(frozen=True)
class Components:
    """ Ablation switches for full box, motion compensation, interpolation, merge. """

    fullbox: bool = True
    compensation: bool = True
    interpolation: bool = True
    merge: bool = True

    def label(self) -> str:
        switches = (
            ("FB", self.fullbox),
            ("MC", self.compensation),
            ("GSI", self.interpolation),
            ("TM", self.merge),
        )
        names = [name for name, enabled in switches if enabled]
        return "+".join(names) or "baseline"


@dataclass(frozen=True)
class PipelineConfig:
    tracker: TrackerConfig = TrackerConfig()
    fullbox: FullboxSettings = FullboxSettings()
    ensemble: EnsembleSettings = EnsembleSettings()
    postprocess: PostprocessConfig = PostprocessConfig()
    metrics: MetricsSettings = MetricsSettings()
    search: SearchConfig = SearchConfig()
    sim: SimConfig = SimConfig()
    sequences: Dict[str, SequenceOverride] = field(default_factory=dict)
    # fully-qualified keys that fell back to their default
    defaulted: Tuple[str, ...] = ()
    resolved: Dict[str, object] = field(default_factory=dict, compare=False)

    def override_for(self, name: str) -> SequenceOverride:
        return self.sequences.get(name, SequenceOverride())


@dataclass(frozen=True)
class SequenceConfig:
    meta: SequenceMeta
    tracker: TrackerConfig
    fullbox: FullboxSettings
    postprocess: PostprocessConfig
    metrics: MetricsSettings
    components: Components

    def as_dict(self) -> dict:
        tracker = dataclasses.asdict(dataclasses.replace(self.tracker, warps=None))
        tracker.pop("warps")
        return {
            "sequence": self.meta.name,
            "scene_kind": self.meta.scene_kind.value,
            "tracker": tracker,
            "fullbox": dataclasses.asdict(self.fullbox),
            "postprocess": {
                "steps": list(self.postprocess.steps),
                "interpolate_max_gap": self.postprocess.interpolate_max_gap,
                "gsi_tau": self.postprocess.gsi_tau,
                "gsi_noise": self.postprocess.gsi_noise,
                "min_len": self.postprocess.min_len,
                "merge": dataclasses.asdict(self.postprocess.merge),
            },
            "components": dataclasses.asdict(self.components),
        }


def resolve_sequence(
    cfg: PipelineConfig,
    meta: SequenceMeta,
    warps: Optional[WarpTable] = None,
    components: Components = Components(),
) -> SequenceConfig:
    """
    Apply a sequence's overrides and the component switches.

    Motion compensation (warps and the NSA update) only runs on dynamic
    scenes; track merge only on static ones.
    """
    override = cfg.override_for(meta.name)
    if override.scene_kind is not None and override.scene_kind is not meta.scene_kind:
        meta = dataclasses.replace(meta, scene_kind=override.scene_kind)

    compensate = components.compensation and meta.is_dynamic
    tracker = dataclasses.replace(
        cfg.tracker,
        track_buffer=override.track_buffer or cfg.tracker.track_buffer,
        nsa=cfg.tracker.nsa and compensate,
        warps=warps if compensate else None,
    )

    fullbox = dataclasses.replace(
        cfg.fullbox,
        mode=override.fullbox_mode or cfg.fullbox.mode,
        aspect_ratio=override.aspect_ratio or cfg.fullbox.aspect_ratio,
        height_samples=(
            override.height_samples
            if override.height_samples is not None
            else cfg.fullbox.height_samples
        ),
    )
    if fullbox.mode not in FULLBOX_MODES:
        raise ConfigError(
            f"sequence.{meta.name}.fullbox_mode",
            f"must be one of {list(FULLBOX_MODES)}",
        )
    if not components.fullbox:
        fullbox = dataclasses.replace(fullbox, mode=FULLBOX_OFF)

    dropped: List[str] = []
    if not components.interpolation:
        dropped += [INTERPOLATE, GSI]
    if not components.merge:
        dropped.append(MERGE)
    steps = tuple(step for step in cfg.postprocess.steps if step not in dropped)
    postprocess = dataclasses.replace(
        cfg.postprocess,
        steps=steps,
        interpolate_max_gap=cfg.postprocess.interpolate_max_gap or tracker.track_buffer,
    )

    logger.debug(
        "Resolved %s as %s scene with %s",
        meta.name,
        meta.scene_kind.value,
        components.label(),
    )
    return SequenceConfig(meta, tracker, fullbox, postprocess, cfg.metrics, components)
