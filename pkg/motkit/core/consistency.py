"""
Pyramid consistency loss between stylised copies of the same image.

For every pyramid layer the pooled features of all styles are pulled towards
their mean; the loss is the lambda-weighted L1 distance to that mean.
"""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from motkit.core.exceptions import DataError

DEFAULT_LAYER_WEIGHT = 0.5


def adaptive_avg_pool(feature_map) -> np.ndarray:
    """ Per-channel spatial mean of an (H, W, C) or (H, W) grid, i.e. 1x1 pooling. """
    grid = np.asarray(feature_map, dtype=float)
    if grid.ndim == 2:
        grid = grid[..., None]
    if grid.ndim != 3 or grid.shape[0] == 0 or grid.shape[1] == 0:
        raise DataError(
            f"Expected a non-empty (H, W[, C]) feature map, got shape {grid.shape}"
        )
    return grid.mean(axis=(0, 1))


@dataclass
class FeaturePyramidSet:
    """
    Pooled features indexed by (style, layer). Style 0 is the original image,
    styles 1..K its stylised copies.
    """

    features: Dict[Tuple[int, str], np.ndarray]
    layer_weights: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.features = {
            key: np.atleast_1d(np.asarray(value, dtype=float))
            for key, value in self.features.items()
        }
        styles = sorted({style for style, _ in self.features})
        layers = sorted({layer for _, layer in self.features})
        if len(styles) < 2:
            raise DataError(
                "Consistency needs the original and at least one stylised copy"
            )
        for style in styles:
            for layer in layers:
                if (style, layer) not in self.features:
                    raise DataError(
                        f"Missing pooled features for style {style} layer {layer}"
                    )
        for layer in layers:
            lengths = {len(self.features[(style, layer)]) for style in styles}
            if len(lengths) != 1:
                raise DataError(
                    f"Layer {layer} has mismatched feature lengths {sorted(lengths)}"
                )
        self.styles = styles
        self.layers = layers

    @classmethod
    def from_maps(
        cls,
        maps: Mapping[Tuple[int, str], object],
        layer_weights: Mapping[str, float] = None,
    ) -> "FeaturePyramidSet":
        pooled = {key: adaptive_avg_pool(value) for key, value in maps.items()}
        return cls(pooled, dict(layer_weights or {}))

    def weight(self, layer: str) -> float:
        return self.layer_weights.get(layer, DEFAULT_LAYER_WEIGHT)

    def stacked(self, layer: str) -> np.ndarray:
        return np.stack([self.features[(style, layer)] for style in self.styles])


def pyramid_consistency_loss(p: FeaturePyramidSet) -> float:
    loss = 0.0
    for layer in p.layers:
        stacked = p.stacked(layer)
        target = stacked.mean(axis=0)
        loss += p.weight(layer) * float(np.abs(stacked - target).sum())
    return loss


def consistency_from_lists(
    pyramids: Sequence[Sequence[object]], layer_weights: Sequence[float] = None
) -> float:
    """ Loss for pyramids given as a list per style of per-layer feature maps. """
    maps = {
        (style, str(layer)): feature_map
        for style, pyramid in enumerate(pyramids)
        for layer, feature_map in enumerate(pyramid)
    }
    weights = {str(layer): weight for layer, weight in enumerate(layer_weights or [])}
    return pyramid_consistency_loss(FeaturePyramidSet.from_maps(maps, weights))
