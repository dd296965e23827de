"""
Warping and Compositing for EmbedMap
Gathers camera frames onto the sphere of directions, merges cameras into one
layer and composites the user layer over the real-scene map
"""
from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np

from camera import CameraView, sample_view_directions
from config import parse_size
from envmap import EnvironmentMap, Parameterization, texel_directions, validate_map_size
from errors import ValidationError
from workers import DEFAULT_BAND_ROWS, stack_bands

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MapSpec:
    """Target map dimensions and parameterization"""
    width: int
    height: int
    param: Parameterization

    def __post_init__(self):
        object.__setattr__(self, "param", Parameterization.parse(self.param))
        validate_map_size(self.width, self.height, self.param)

    @classmethod
    def parse(cls, size: str, param: Union[str, Parameterization]) -> "MapSpec":
        width, height = parse_size(size)
        return cls(width, height, Parameterization.parse(param))


class WarpedLayer:
    """
    One camera's contribution on the sphere: a premultiplied RGBA map and a
    per-texel accumulation weight (zero exactly where alpha is zero)
    """

    def __init__(self, envmap: EnvironmentMap, weight: np.ndarray):
        weight = np.asarray(weight, dtype=np.float64)
        if weight.shape != (envmap.height, envmap.width):
            raise ValidationError(f"Weight shape {weight.shape} does not match {envmap!r}")
        if not np.all(np.isfinite(weight)) or np.any(weight < 0.0):
            raise ValidationError("Layer weights must be finite and nonnegative")
        if np.any((weight == 0.0) != (envmap.alpha == 0.0)):
            raise ValidationError("Layer weight must be zero exactly where alpha is zero")
        weight.setflags(write=False)
        self.map = envmap
        self.weight = weight

    def __repr__(self) -> str:
        return f"WarpedLayer({self.map!r}, coverage={np.count_nonzero(self.weight)})"


@dataclass(frozen=True)
class RigCapture:
    """All views of one capture instant, sharing one world frame"""
    views: Sequence[CameraView]
    frame_index: int

    def __post_init__(self):
        if not self.views:
            raise ValidationError("A rig capture needs at least one view")
        for view in self.views:
            if view.frame is None:
                raise ValidationError(f"Frame {self.frame_index}: a view is missing its pixels")
        object.__setattr__(self, "views", tuple(self.views))


def warp_view_to_envmap(view: CameraView, spec: MapSpec, weight: float = 1.0,
                        workers: int = 1, band_rows: int = DEFAULT_BAND_ROWS) -> WarpedLayer:
    """
    Gather one (premultiplied) view onto the target map

    Every target texel center direction is looked up in the view from the
    shared capture point (camera translation is ignored). Covered texels
    with nonzero sample alpha take the frame sample and weight = weight x
    sample alpha; the rest are transparent black with weight 0.

    Args:
        weight: per-layer scalar, must be > 0
    """
    if not weight > 0.0:
        raise ValidationError(f"Layer weight must be positive, got {weight}")

    def band(rows: slice) -> np.ndarray:
        dirs, valid = texel_directions(spec.width, spec.height, spec.param, rows)
        rgba, covered = sample_view_directions(view, dirs)
        keep = (covered & valid & (rgba[..., 3] > 0.0))[..., None]
        return np.where(keep, rgba, 0.0).astype(np.float32)

    texels = stack_bands(band, spec.height, workers, band_rows)
    layer_map = EnvironmentMap(texels, spec.param)
    return WarpedLayer(layer_map, layer_map.alpha.astype(np.float64) * weight)


def merge_views(layers: Sequence[WarpedLayer]) -> EnvironmentMap:
    """
    Weighted average of layers

    Per texel: color = sum(color * w) / sum(w), alpha = min(1, sum(alpha * w) / sum(w)),
    transparent black where sum(w) = 0. Accumulation follows list order.

    Raises:
        ValidationError: empty list or mismatched layouts
    """
    if not layers:
        raise ValidationError("merge_views needs at least one layer")
    first = layers[0].map
    for layer in layers[1:]:
        if not layer.map.same_layout(first):
            raise ValidationError(f"Cannot merge {layer.map!r} with {first!r}")

    total_w = np.zeros((first.height, first.width), dtype=np.float64)
    total = np.zeros((first.height, first.width, 4), dtype=np.float64)
    for layer in layers:
        total += layer.map.texels.astype(np.float64) * layer.weight[..., None]
        total_w += layer.weight

    covered = total_w > 0.0
    out = np.zeros_like(total)
    out[covered] = total[covered] / total_w[covered][:, None]
    out[..., 3] = np.minimum(out[..., 3], 1.0)
    return EnvironmentMap(out.astype(np.float32), first.param)


def composite_over(user: EnvironmentMap, background: EnvironmentMap) -> EnvironmentMap:
    """
    Premultiplied over: out = user + (1 - user.alpha) * background, all four channels

    Raises:
        ValidationError: mismatched layouts
    """
    if not user.same_layout(background):
        raise ValidationError(f"Cannot composite {user!r} over {background!r}")
    fg = user.texels.astype(np.float64)
    bg = background.texels.astype(np.float64)
    out = fg + (1.0 - fg[..., 3:4]) * bg
    out[..., 3] = np.clip(out[..., 3], 0.0, 1.0)
    return EnvironmentMap(out.astype(np.float32), user.param)


def build_user_envmap(capture: RigCapture, spec: MapSpec, workers: int = 1,
                      band_rows: int = DEFAULT_BAND_ROWS,
                      weights: Sequence[float] = ()) -> EnvironmentMap:
    """Warp every view of a capture and merge them"""
    layers: List[WarpedLayer] = []
    for i, view in enumerate(capture.views):
        w = weights[i] if i < len(weights) else 1.0
        layers.append(warp_view_to_envmap(view, spec, w, workers, band_rows))
    return merge_views(layers)
