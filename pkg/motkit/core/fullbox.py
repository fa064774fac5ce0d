"""
Full-body box recovery for detections clipped at the image border.
"""
import enum
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from motkit.core.boxes import BoundingBox, SequenceMeta
from motkit.core.exceptions import DegenerateFit

logger = logging.getLogger(__name__)

DEFAULT_ASPECT_RATIO = 2.6
DEFAULT_CLIP_MARGIN = 2.0

TOP = "top"
BOTTOM = "bottom"
LEFT = "left"
RIGHT = "right"


class Anchor(enum.Enum):
    TOP_Y = "top"
    BOTTOM_Y = "bottom"


@dataclass(frozen=True)
class HeightModel:
    """ h = a * y + b, with y the top or bottom edge of the box. """

    a: float
    b: float
    anchor: Anchor

    def __post_init__(self) -> None:
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise DegenerateFit(
                f"Height model coefficients must be finite, got a={self.a} b={self.b}"
            )

    def height_at(self, y: float) -> float:
        return self.a * y + self.b

    def residual(self, samples: Iterable[Tuple[float, float]]) -> float:
        return float(sum((h - self.height_at(y)) ** 2 for y, h in samples))


@dataclass(frozen=True)
class AspectRatioMode:
    # height / width
    ratio: float = DEFAULT_ASPECT_RATIO


@dataclass(frozen=True)
class HeightModelMode:
    # bottom-clipped boxes still show their top edge, so use the top-anchored model
    top_model: Optional[HeightModel] = None
    bottom_model: Optional[HeightModel] = None


ExtendMode = Union[AspectRatioMode, HeightModelMode]


def fit_height_model(
    samples: Sequence[Tuple[float, float]], anchor: Anchor
) -> HeightModel:
    """ Ordinary least squares fit of h on y. """
    data = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(data) < 2 or np.ptp(data[:, 0]) == 0:
        raise DegenerateFit("Height model needs at least two samples with distinct y")
    design = np.column_stack([data[:, 0], np.ones(len(data))])
    (a, b), *_ = np.linalg.lstsq(design, data[:, 1], rcond=None)
    return HeightModel(float(a), float(b), anchor)


def clipped_borders(box: BoundingBox, meta: SequenceMeta, margin: float) -> Set[str]:
    borders = set()
    if box.y <= margin:
        borders.add(TOP)
    if box.bottom >= meta.height - margin:
        borders.add(BOTTOM)
    if box.x <= margin:
        borders.add(LEFT)
    if box.right >= meta.width - margin:
        borders.add(RIGHT)
    return borders


def extend_box(
    box: BoundingBox,
    meta: SequenceMeta,
    mode: ExtendMode,
    margin: float = DEFAULT_CLIP_MARGIN,
) -> BoundingBox:
    """
    Extend a border-clipped box to a full-body box. Never shrinks.

    When both top and bottom are clipped the bottom rule wins.
    """
    borders = clipped_borders(box, meta, margin)
    if not borders:
        return box

    x, y, w, h = box.x, box.y, box.w, box.h
    if BOTTOM in borders or TOP in borders:
        if isinstance(mode, AspectRatioMode):
            target = mode.ratio * w
        elif BOTTOM in borders:
            target = mode.top_model.height_at(y) if mode.top_model else h
        else:
            target = mode.bottom_model.height_at(y + h) if mode.bottom_model else h
        new_h = max(h, target)
        if BOTTOM not in borders:
            y = y + h - new_h
        h = new_h

    if isinstance(mode, AspectRatioMode) and (LEFT in borders or RIGHT in borders):
        new_w = max(w, h / mode.ratio)
        if RIGHT not in borders:
            x = x + w - new_w
        w = new_w

    if (x, y, w, h) == (box.x, box.y, box.w, box.h):
        return box
    return box.replace(x=x, y=y, w=w, h=h)


def extract_height_samples(
    dets: Sequence[BoundingBox],
    meta: SequenceMeta,
    anchor: Anchor,
    min_score: float = 0.8,
    margin: float = DEFAULT_CLIP_MARGIN,
) -> List[Tuple[float, float]]:
    """ (y, h) pairs from confident detections that touch no border. """
    samples = []
    for det in dets:
        if det.score < min_score or clipped_borders(det, meta, margin):
            continue
        y = det.y if anchor is Anchor.TOP_Y else det.bottom
        samples.append((y, det.h))
    logger.debug("Extracted %d height samples for %s", len(samples), meta.name)
    return samples
