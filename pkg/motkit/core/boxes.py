"""
Box geometry and the domain types shared by every stage of the pipeline.

Coordinates are continuous, 0-based pixels. Boxes may extend beyond the image
border (full-box convention). Frames are 1-based, like the MOT Challenge files.
"""
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Sequence

import numpy as np

from motkit.core.exceptions import DataError


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float
    score: float = 1.0
    frame: int = 0
    # Set on boxes produced by interpolation rather than observed.
    interpolated: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise DataError(f"Box must have positive size, got w={self.w} h={self.h}")
        if not 0.0 <= self.score <= 1.0:
            raise DataError(f"Box score must be in [0, 1], got {self.score}")

    @property
    def right(self) -> float:
        return self.x + self.w

    @property
    def bottom(self) -> float:
        return self.y + self.h

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x + self.w / 2.0, self.y + self.h / 2.0])

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def tlwh(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h])

    @property
    def tlbr(self) -> np.ndarray:
        return np.array([self.x, self.y, self.right, self.bottom])

    def replace(self, **changes) -> "BoundingBox":
        return replace(self, **changes)


class SceneKind(enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class SequenceMeta:
    name: str
    width: int
    height: int
    fps: float
    length: int
    scene_kind: SceneKind = SceneKind.STATIC

    def __post_init__(self) -> None:
        for attr in ("width", "height", "fps", "length"):
            value = getattr(self, attr)
            if not value > 0:
                raise DataError(
                    f"Sequence {self.name!r}: {attr} must be positive, got {value}"
                )

    @property
    def is_dynamic(self) -> bool:
        return self.scene_kind is SceneKind.DYNAMIC


@dataclass
class Trajectory:
    """ One identity and its boxes, keyed by strictly increasing frame. """

    id: int
    boxes: Dict[int, BoundingBox] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.boxes = dict(sorted(self.boxes.items()))

    def add(self, box: BoundingBox) -> None:
        if self.boxes and box.frame <= self.last_frame:
            raise DataError(
                f"Track {self.id}: frame {box.frame} does not follow "
                f"frame {self.last_frame}"
            )
        self.boxes[box.frame] = box

    @property
    def frames(self) -> List[int]:
        return list(self.boxes)

    @property
    def first_frame(self) -> int:
        return next(iter(self.boxes))

    @property
    def last_frame(self) -> int:
        return next(reversed(self.boxes))

    @property
    def first_box(self) -> BoundingBox:
        return self.boxes[self.first_frame]

    @property
    def last_box(self) -> BoundingBox:
        return self.boxes[self.last_frame]

    @property
    def observed_count(self) -> int:
        return sum(1 for box in self.boxes.values() if not box.interpolated)

    def copy(self, id: int = None) -> "Trajectory":
        return Trajectory(self.id if id is None else id, dict(self.boxes))

    def __len__(self) -> int:
        return len(self.boxes)

    def __iter__(self) -> Iterator[BoundingBox]:
        return iter(self.boxes.values())


def iou(a: BoundingBox, b: BoundingBox) -> float:
    inter_w = min(a.right, b.right) - max(a.x, b.x)
    inter_h = min(a.bottom, b.bottom) - max(a.y, b.y)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    return inter / (a.area + b.area - inter)


def iou_matrix(a: Sequence[BoundingBox], b: Sequence[BoundingBox]) -> np.ndarray:
    """ Pairwise IoU, shape (len(a), len(b)). """
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ta = np.array([box.tlbr for box in a])
    tb = np.array([box.tlbr for box in b])
    inter_w = np.minimum(ta[:, None, 2], tb[None, :, 2]) - np.maximum(
        ta[:, None, 0], tb[None, :, 0]
    )
    inter_h = np.minimum(ta[:, None, 3], tb[None, :, 3]) - np.maximum(
        ta[:, None, 1], tb[None, :, 1]
    )
    inter = np.clip(inter_w, 0, None) * np.clip(inter_h, 0, None)
    area_a = (ta[:, 2] - ta[:, 0]) * (ta[:, 3] - ta[:, 1])
    area_b = (tb[:, 2] - tb[:, 0]) * (tb[:, 3] - tb[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def center_distance(a: BoundingBox, b: BoundingBox) -> float:
    ca, cb = a.center, b.center
    return math.hypot(ca[0] - cb[0], ca[1] - cb[1])


def to_xyah(box: BoundingBox) -> np.ndarray:
    """ Measurement vector (center x, center y, aspect ratio w/h, height). """
    return np.array([box.x + box.w / 2.0, box.y + box.h / 2.0, box.w / box.h, box.h])


def from_xyah(
    measurement: Sequence[float], score: float = 1.0, frame: int = 0
) -> BoundingBox:
    cx, cy, aspect, h = (float(v) for v in measurement[:4])
    w = aspect * h
    return BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h, score=score, frame=frame)
