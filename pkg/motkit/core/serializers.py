import logging
from typing import Dict, List, Tuple

from rest_framework import serializers

from motkit.core.association import TrackerConfig
from motkit.core.boxes import SceneKind
from motkit.core.config import (
    FULLBOX_MODES,
    EnsembleSettings,
    FullboxSettings,
    MetricsSettings,
    PipelineConfig,
    SequenceOverride,
)
from motkit.core.exceptions import ConfigError, MotkitError
from motkit.core.postprocess import STEPS, MergeParams, PostprocessConfig
from motkit.core.search import SearchConfig
from motkit.core.sim import SimConfig

logger = logging.getLogger(__name__)


class CommaSeparatedField(serializers.Field):
    """ "a, b, c" as a tuple, each item converted by child. """

    def __init__(self, child: serializers.Field, **kwargs) -> None:
        self.child = child
        super().__init__(**kwargs)
        self.child.bind(field_name="", parent=self)

    def to_internal_value(self, data) -> Tuple:
        if isinstance(data, (list, tuple)):
            items = list(data)
        else:
            items = [item.strip() for item in str(data).split(",") if item.strip()]
        return tuple(self.child.run_validation(item) for item in items)

    def to_representation(self, value) -> str:
        return ",".join(str(item) for item in value)


class TrackerSerializer(serializers.Serializer):
    high_thresh = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.6)
    low_thresh = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.1)
    new_track_thresh = serializers.FloatField(
        min_value=0.0, max_value=1.0, allow_null=True, default=None
    )
    match_thresh_round1 = serializers.FloatField(
        min_value=0.0, max_value=1.0, default=0.8
    )
    match_thresh_round2 = serializers.FloatField(
        min_value=0.0, max_value=1.0, default=0.5
    )
    track_buffer = serializers.IntegerField(min_value=1, default=30)
    fuse_score = serializers.BooleanField(default=False)
    border_margin = serializers.FloatField(min_value=0.0, default=10.0)
    border_score_floor = serializers.FloatField(
        min_value=0.0, max_value=1.0, allow_null=True, default=None
    )
    nsa = serializers.BooleanField(default=True)
    min_hits = serializers.IntegerField(min_value=1, default=1)

    def validate(self, attrs: Dict) -> Dict:
        if attrs["low_thresh"] >= attrs["high_thresh"]:
            raise serializers.ValidationError(
                {"low_thresh": "must be lower than high_thresh"}
            )
        return attrs

    def build(self) -> TrackerConfig:
        return TrackerConfig(**self.validated_data)


class FullboxSerializer(serializers.Serializer):
    mode = serializers.ChoiceField(choices=FULLBOX_MODES, default="aspect")
    aspect_ratio = serializers.FloatField(min_value=0.1, default=2.6)
    clip_margin = serializers.FloatField(min_value=0.0, default=2.0)
    min_sample_score = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.8)
    height_samples = serializers.IntegerField(
        min_value=1, allow_null=True, default=None
    )

    def build(self) -> FullboxSettings:
        return FullboxSettings(**self.validated_data)


class EnsembleSerializer(serializers.Serializer):
    method = serializers.ChoiceField(choices=("wbf", "nms"), default="wbf")
    iou_thresh = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.55)
    score_thresh = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.05)
    weights = CommaSeparatedField(
        child=serializers.FloatField(min_value=0.0), allow_null=True, default=()
    )

    def build(self) -> EnsembleSettings:
        data = dict(self.validated_data)
        data["weights"] = data["weights"] or ()
        return EnsembleSettings(**data)


class PostprocessSerializer(serializers.Serializer):
    steps = CommaSeparatedField(
        child=serializers.ChoiceField(choices=STEPS), default=STEPS
    )
    interpolate_max_gap = serializers.IntegerField(
        min_value=1, allow_null=True, default=None
    )
    gsi_tau = serializers.FloatField(min_value=0.0, default=10.0)
    gsi_noise = serializers.FloatField(min_value=0.0, default=1e-2)
    min_len = serializers.IntegerField(min_value=1, default=10)
    merge_max_gap = serializers.IntegerField(min_value=1, default=90)
    merge_dist_thresh = serializers.FloatField(
        min_value=0.0, allow_null=True, default=None
    )
    merge_dist_scale = serializers.FloatField(min_value=0.0, default=0.5)
    merge_area_ratio = serializers.FloatField(min_value=1.0, default=1.6)
    merge_velocity_window = serializers.IntegerField(min_value=1, default=10)

    def build(self) -> PostprocessConfig:
        data = dict(self.validated_data)
        merge = MergeParams(
            max_gap=data.pop("merge_max_gap"),
            dist_thresh=data.pop("merge_dist_thresh"),
            dist_scale=data.pop("merge_dist_scale"),
            area_ratio=data.pop("merge_area_ratio"),
            velocity_window=data.pop("merge_velocity_window"),
        )
        return PostprocessConfig(merge=merge, **data)


class MetricsSerializer(serializers.Serializer):
    iou_thresh = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.5)
    visibility_thresh = serializers.FloatField(
        min_value=0.0, max_value=1.0, default=0.0
    )
    exclude_interpolated = serializers.BooleanField(default=False)

    def build(self) -> MetricsSettings:
        return MetricsSettings(**self.validated_data)


class SearchSerializer(serializers.Serializer):
    rounds = serializers.IntegerField(min_value=1, default=5)
    steps_per_round = serializers.IntegerField(min_value=1, default=4)
    samples_per_step = serializers.IntegerField(min_value=2, default=8)
    dims = serializers.IntegerField(min_value=1, default=1)
    init_mean = serializers.FloatField(default=0.5)
    std = serializers.FloatField(default=0.2)
    lower = serializers.FloatField(default=0.0)
    upper = serializers.FloatField(default=1.0)
    clip_epsilon = serializers.FloatField(default=0.2)
    learning_rate = serializers.FloatField(default=0.1)
    update_epochs = serializers.IntegerField(min_value=1, default=1)
    seed = serializers.IntegerField(default=0)

    def build(self) -> SearchConfig:
        return SearchConfig(**self.validated_data)


class SimSerializer(serializers.Serializer):
    name = serializers.CharField(default="SIM-01")
    n_tracks = serializers.IntegerField(min_value=1, default=8)
    length = serializers.IntegerField(min_value=1, default=200)
    width = serializers.IntegerField(min_value=1, default=1920)
    height = serializers.IntegerField(min_value=1, default=1080)
    fps = serializers.FloatField(min_value=0.0, default=30.0)
    speed = serializers.FloatField(min_value=0.0, default=2.0)
    motion_noise = serializers.FloatField(min_value=0.0, default=0.0)
    jitter = serializers.FloatField(min_value=0.0, default=0.0)
    drop_prob = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.0)
    fp_rate = serializers.FloatField(min_value=0.0, default=0.0)
    score_beta = serializers.FloatField(default=1.0)
    score_noise = serializers.FloatField(min_value=0.0, default=0.05)
    fp_score_beta = CommaSeparatedField(
        child=serializers.FloatField(min_value=0.0), default=(2.0, 5.0)
    )
    height_slope = serializers.FloatField(default=0.25)
    height_intercept = serializers.FloatField(default=20.0)
    clip_at_border = serializers.BooleanField(default=False)
    clip_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.0)
    camera_pan = CommaSeparatedField(child=serializers.FloatField(), default=(0.0, 0.0))
    pan_jitter = serializers.FloatField(min_value=0.0, default=0.0)
    gap_prob = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.0)
    gap_length = serializers.IntegerField(min_value=0, default=0)
    stagger_starts = serializers.BooleanField(default=True)
    min_lifetime = serializers.IntegerField(min_value=1, default=20)
    seed = serializers.IntegerField(default=0)

    def validate(self, attrs: Dict) -> Dict:
        for key in ("camera_pan", "fp_score_beta"):
            if len(attrs[key]) != 2:
                raise serializers.ValidationError(
                    {key: "expects two comma-separated numbers"}
                )
        return attrs

    def build(self) -> SimConfig:
        return SimConfig(**self.validated_data)


class SequenceOverrideSerializer(serializers.Serializer):
    scene_kind = serializers.ChoiceField(
        choices=[kind.value for kind in SceneKind], allow_null=True, default=None
    )
    track_buffer = serializers.IntegerField(min_value=1, allow_null=True, default=None)
    fullbox_mode = serializers.ChoiceField(
        choices=FULLBOX_MODES, allow_null=True, default=None
    )
    aspect_ratio = serializers.FloatField(min_value=0.1, allow_null=True, default=None)
    height_samples = serializers.IntegerField(
        min_value=1, allow_null=True, default=None
    )

    def build(self) -> SequenceOverride:
        data = dict(self.validated_data)
        if data["scene_kind"] is not None:
            data["scene_kind"] = SceneKind(data["scene_kind"])
        return SequenceOverride(**data)


SECTION_SERIALIZERS = {
    "tracker": TrackerSerializer,
    "fullbox": FullboxSerializer,
    "ensemble": EnsembleSerializer,
    "postprocess": PostprocessSerializer,
    "metrics": MetricsSerializer,
    "search": SearchSerializer,
    "sim": SimSerializer,
}


def _first_error(prefix: str, errors: Dict) -> ConfigError:
    key, messages = next(iter(errors.items()))
    if isinstance(messages, dict):
        return _first_error(f"{prefix}.{key}", messages)
    message = messages[0] if isinstance(messages, list) else messages
    if key == "non_field_errors":
        return ConfigError(prefix, str(message))
    return ConfigError(f"{prefix}.{key}", str(message))


def _validated(serializer_class, prefix: str, values: Dict[str, object]):
    known = set(serializer_class().fields)
    for key in sorted(set(values) - known):
        logger.warning("Ignoring unknown config key %s.%s", prefix, key)
    serializer = serializer_class(data={k: v for k, v in values.items() if k in known})
    if not serializer.is_valid():
        raise _first_error(prefix, serializer.errors)
    defaulted = [f"{prefix}.{key}" for key in sorted(known - set(values))]
    return serializer, defaulted


def build_pipeline_config(flat: Dict[str, object]) -> PipelineConfig:
    """
    Validate a flat `section.key -> value` mapping into a PipelineConfig.

    Unknown keys are logged and ignored, missing keys take their defaults and
    are listed in PipelineConfig.defaulted.
    """
    sections: Dict[str, Dict[str, object]] = {name: {} for name in SECTION_SERIALIZERS}
    overrides: Dict[str, Dict[str, object]] = {}
    for full_key, value in flat.items():
        parts = full_key.split(".")
        if parts[0] == "sequence" and len(parts) >= 3:
            overrides.setdefault(".".join(parts[1:-1]), {})[parts[-1]] = value
        elif len(parts) == 2 and parts[0] in sections:
            sections[parts[0]][parts[1]] = value
        else:
            logger.warning("Ignoring unknown config key %s", full_key)

    built = {}
    defaulted: List[str] = []
    resolved: Dict[str, object] = {}
    try:
        for name, serializer_class in SECTION_SERIALIZERS.items():
            serializer, missing = _validated(serializer_class, name, sections[name])
            built[name] = serializer.build()
            defaulted += missing
            for key, value in serializer.validated_data.items():
                resolved[f"{name}.{key}"] = value

        sequences = {}
        for sequence, values in sorted(overrides.items()):
            prefix = f"sequence.{sequence}"
            serializer, _ = _validated(SequenceOverrideSerializer, prefix, values)
            sequences[sequence] = serializer.build()
            for key, value in values.items():
                resolved[f"{prefix}.{key}"] = value
    except ConfigError:
        raise
    except MotkitError as exc:
        raise ConfigError("config", exc.message)

    return PipelineConfig(
        sequences=sequences,
        defaulted=tuple(defaulted),
        resolved={
            key: list(value) if isinstance(value, tuple) else value
            for key, value in resolved.items()
        },
        **built,
    )


class EvalReportSerializer(serializers.Serializer):
    sequence = serializers.CharField()
    scene_kind = serializers.CharField()
    map50 = serializers.FloatField(allow_null=True)
    hota = serializers.FloatField()
    deta = serializers.FloatField()
    assa = serializers.FloatField()
    mota = serializers.FloatField()
    motp = serializers.FloatField()
    idf1 = serializers.FloatField()
    idp = serializers.FloatField()
    idr = serializers.FloatField()
    idsw = serializers.IntegerField()
    fp = serializers.IntegerField()
    fn = serializers.IntegerField()
    gt_count = serializers.IntegerField()
    identities = serializers.IntegerField()
