"""
Environment Map Core for EmbedMap
Sphere-of-directions parameterizations, texel addressing, bilinear sampling
and conversion between parameterizations

Conventions (shared by every module):
  world frame is right-handed, y up, the forward direction is -z
  LatLong:   u = 0.5 + atan2(x, -z) / 2pi,  v = arccos(y) / pi
  SphereMap: m = 2 sqrt(x^2 + y^2 + (z+1)^2),  u = x/m + 0.5,  v = y/m + 0.5
  texel (i, j) has its center at ((i + 0.5) / width, (j + 0.5) / height)
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DomainError, SingularityError, ValidationError

logger = logging.getLogger(__name__)

UNIT_TOLERANCE = 1e-6
SINGULAR_NUDGE_RAD = 1e-4

RGBA = Tuple[float, float, float, float]


class Parameterization(str, Enum):
    """Mapping between unit directions and texture coordinates"""
    LATLONG = "latlong"
    SPHEREMAP = "spheremap"

    @classmethod
    def parse(cls, value: Union[str, "Parameterization"]) -> "Parameterization":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValidationError(f"Unknown parameterization: {value!r}")


@dataclass(frozen=True)
class UnitDirection:
    """Unit 3-vector in world space; the constructor normalizes"""
    x: float
    y: float
    z: float

    def __post_init__(self):
        comps = (float(self.x), float(self.y), float(self.z))
        if not all(math.isfinite(c) for c in comps):
            raise ValidationError(f"Direction has non-finite components: {comps}")
        norm = math.sqrt(comps[0] ** 2 + comps[1] ** 2 + comps[2] ** 2)
        if norm == 0.0:
            raise ValidationError("Zero vector has no direction")
        object.__setattr__(self, "x", comps[0] / norm)
        object.__setattr__(self, "y", comps[1] / norm)
        object.__setattr__(self, "z", comps[2] / norm)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "UnitDirection":
        return cls(float(values[0]), float(values[1]), float(values[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class TexelCoord:
    """Continuous texture coordinate"""
    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValidationError(f"Texel coordinate is not finite: ({self.u}, {self.v})")


def _unit_array(d: Union[UnitDirection, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(d, UnitDirection):
        return d.as_array()
    arr = np.asarray(d, dtype=np.float64)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ValidationError(f"Expected a finite 3-vector, got {d!r}")
    if abs(float(np.linalg.norm(arr)) - 1.0) > UNIT_TOLERANCE:
        raise ValidationError(f"Direction is not unit length: {d!r}")
    return arr


# ---------------------------------------------------------------------------
# Vectorized mappings

def directions_to_uv(dirs: np.ndarray, param: Parameterization) -> Tuple[np.ndarray, np.ndarray]:
    """
    Map an array of unit directions (..., 3) to texture coordinates

    Raises:
        SingularityError: SphereMap lookup of exactly (0, 0, -1)
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]

    if param is Parameterization.LATLONG:
        u = np.mod(0.5 + np.arctan2(x, -z) / (2.0 * np.pi), 1.0)
        v = np.arccos(np.clip(y, -1.0, 1.0)) / np.pi
        # poles have no azimuth
        u = np.where((v == 0.0) | (v == 1.0), 0.5, u)
        return u, v

    m = 2.0 * np.sqrt(x * x + y * y + (z + 1.0) ** 2)
    if np.any(m == 0.0):
        raise SingularityError("SphereMap is singular at direction (0, 0, -1)")
    return x / m + 0.5, y / m + 0.5


def uv_to_directions(u: np.ndarray, v: np.ndarray,
                     param: Parameterization) -> Tuple[np.ndarray, np.ndarray]:
    """
    Map texture coordinates to unit directions

    Returns:
        (dirs, valid): directions of shape (..., 3) and a mask that is False
        for SphereMap coordinates outside the inscribed disc (their direction
        entries are meaningless)
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)

    if param is Parameterization.LATLONG:
        phi = (np.mod(u, 1.0) - 0.5) * (2.0 * np.pi)
        theta = np.clip(v, 0.0, 1.0) * np.pi
        sin_t = np.sin(theta)
        dirs = np.stack([sin_t * np.sin(phi), np.cos(theta), -sin_t * np.cos(phi)], axis=-1)
        return dirs, np.ones(u.shape, dtype=bool)

    a = 2.0 * u - 1.0
    b = 2.0 * v - 1.0
    r2 = a * a + b * b
    valid = r2 <= 1.0
    c = np.sqrt(np.clip(1.0 - r2, 0.0, None))
    dirs = np.stack([2.0 * c * a, 2.0 * c * b, 2.0 * c * c - 1.0], axis=-1)
    return dirs, valid


def texel_centers(width: int, height: int,
                  rows: Optional[slice] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Texel-center (u, v) grids of shape (rows, width)"""
    j = np.arange(height, dtype=np.float64)[rows if rows is not None else slice(None)]
    i = np.arange(width, dtype=np.float64)
    u = (i[None, :] + 0.5) / width
    v = (j[:, None] + 0.5) / height
    return np.broadcast_to(u, (len(j), width)), np.broadcast_to(v, (len(j), width))


def texel_directions(width: int, height: int, param: Parameterization,
                     rows: Optional[slice] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Directions through every texel center, plus the validity mask"""
    u, v = texel_centers(width, height, rows)
    return uv_to_directions(u, v, param)


def validate_map_size(width: int, height: int, param: Parameterization):
    if int(width) < 1 or int(height) < 1:
        raise ValidationError(f"Map size must be >= 1x1, got {width}x{height}")
    if param is Parameterization.LATLONG and int(width) != 2 * int(height):
        raise ValidationError(f"LatLong maps need width = 2 x height, got {width}x{height}")


def nudge_singular(dirs: np.ndarray) -> np.ndarray:
    """Replace exact (0, 0, -1) directions by one tilted SINGULAR_NUDGE_RAD toward +y"""
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    singular = (x == 0.0) & (y == 0.0) & (z == -1.0)
    if not np.any(singular):
        return dirs
    nudged = np.array([0.0, math.sin(SINGULAR_NUDGE_RAD), -math.cos(SINGULAR_NUDGE_RAD)])
    return np.where(singular[..., None], nudged, dirs)


# ---------------------------------------------------------------------------
# Environment map

class EnvironmentMap:
    """
    Immutable grid of RGBA linear-radiance texels (float32, row-major, shape
    (height, width, 4)) tagged with its parameterization.
    """

    def __init__(self, texels: np.ndarray, param: Union[Parameterization, str]):
        param = Parameterization.parse(param)
        data = np.array(texels, dtype=np.float32, copy=True)
        if data.ndim != 3 or data.shape[2] != 4:
            raise ValidationError(f"Texels must have shape (height, width, 4), got {data.shape}")
        height, width = data.shape[0], data.shape[1]
        validate_map_size(width, height, param)
        if not np.all(np.isfinite(data)):
            raise ValidationError("Environment map contains non-finite values")
        if np.any(data < 0.0):
            raise ValidationError("Environment map channels must be nonnegative")
        if np.any(data[..., 3] > 1.0):
            raise ValidationError("Environment map alpha must lie in [0, 1]")
        data.setflags(write=False)
        self._texels = data
        self.param = param

    @property
    def texels(self) -> np.ndarray:
        return self._texels

    @property
    def width(self) -> int:
        return self._texels.shape[1]

    @property
    def height(self) -> int:
        return self._texels.shape[0]

    @property
    def rgb(self) -> np.ndarray:
        return self._texels[..., :3]

    @property
    def alpha(self) -> np.ndarray:
        return self._texels[..., 3]

    def same_layout(self, other: "EnvironmentMap") -> bool:
        return (self.width, self.height, self.param) == (other.width, other.height, other.param)

    def __repr__(self) -> str:
        return f"EnvironmentMap({self.width}x{self.height}, {self.param.value})"

    @classmethod
    def constant(cls, width: int, height: int, param: Union[Parameterization, str],
                 rgba: Sequence[float]) -> "EnvironmentMap":
        """Constant map; SphereMap texels outside the disc stay transparent black"""
        param = Parameterization.parse(param)
        validate_map_size(width, height, param)
        data = np.empty((height, width, 4), dtype=np.float32)
        data[...] = np.asarray(rgba, dtype=np.float32)
        if param is Parameterization.SPHEREMAP:
            data[~disc_mask(width, height)] = 0.0
        return cls(data, param)

    @classmethod
    def from_function(cls, width: int, height: int, param: Union[Parameterization, str],
                      radiance: Callable[[np.ndarray], np.ndarray]) -> "EnvironmentMap":
        """
        Evaluate an analytic environment at every texel center

        Args:
            radiance: maps directions (N, 3) to RGBA (N, 4)
        """
        param = Parameterization.parse(param)
        validate_map_size(width, height, param)
        dirs, valid = texel_directions(width, height, param)
        data = np.zeros((height, width, 4), dtype=np.float32)
        data[valid] = radiance(dirs[valid])
        return cls(data, param)


@lru_cache(maxsize=16)
def disc_mask(width: int, height: int) -> np.ndarray:
    """True for SphereMap texels whose center lies inside the inscribed disc (read-only)"""
    u, v = texel_centers(width, height)
    mask = (2.0 * u - 1.0) ** 2 + (2.0 * v - 1.0) ** 2 <= 1.0
    mask.setflags(write=False)
    return mask


# ---------------------------------------------------------------------------
# Operations

def dir_to_texel(d: Union[UnitDirection, Sequence[float]], param: Parameterization) -> TexelCoord:
    """
    Texture coordinate of a unit direction

    Raises:
        ValidationError: d is not unit length
        SingularityError: SphereMap lookup of (0, 0, -1)
    """
    arr = _unit_array(d)
    u, v = directions_to_uv(arr, Parameterization.parse(param))
    return TexelCoord(float(u), float(v))


def texel_to_dir(t: TexelCoord, param: Parameterization) -> UnitDirection:
    """
    Direction through a texture coordinate; inverse of dir_to_texel

    Raises:
        DomainError: coordinate outside [0,1] in v, or outside the SphereMap disc
    """
    param = Parameterization.parse(param)
    if not 0.0 <= t.v <= 1.0:
        raise DomainError(f"v = {t.v} outside [0, 1]")
    if param is Parameterization.SPHEREMAP:
        if not 0.0 <= t.u <= 1.0 or (t.u - 0.5) ** 2 + (t.v - 0.5) ** 2 > 0.25:
            raise DomainError(f"({t.u}, {t.v}) lies outside the SphereMap disc")
    dirs, _ = uv_to_directions(np.float64(t.u), np.float64(t.v), param)
    return UnitDirection.from_array(dirs)


def sample_uv(env: EnvironmentMap, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Bilinear lookup at texture coordinates; returns float64 RGBA (..., 4)

    u wraps for LatLong and clamps for SphereMap, v always clamps. SphereMap
    texels outside the disc never contribute: an invalid neighbour takes the
    value of its valid partner along the interpolation axis, and a point
    with no valid neighbour takes the nearest texel just inside the rim.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    width, height = env.width, env.height
    tex = env.texels

    x = u * width - 0.5
    y = v * height - 0.5
    x0f = np.floor(x)
    y0f = np.floor(y)
    fx = (x - x0f)[..., None]
    fy = (y - y0f)[..., None]
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1

    if env.param is Parameterization.LATLONG:
        x0 %= width
        x1 %= width
    else:
        x0 = np.clip(x0, 0, width - 1)
        x1 = np.clip(x1, 0, width - 1)
    y0 = np.clip(y0, 0, height - 1)
    y1 = np.clip(y1, 0, height - 1)

    a = tex[y0, x0].astype(np.float64)
    b = tex[y0, x1].astype(np.float64)
    c = tex[y1, x0].astype(np.float64)
    d = tex[y1, x1].astype(np.float64)

    if env.param is Parameterization.SPHEREMAP:
        inside = disc_mask(width, height)
        va, vb = inside[y0, x0][..., None], inside[y0, x1][..., None]
        vc, vd = inside[y1, x0][..., None], inside[y1, x1][..., None]
        a, b = np.where(va, a, b), np.where(vb, b, a)
        c, d = np.where(vc, c, d), np.where(vd, d, c)
        top_ok, bot_ok = va | vb, vc | vd
        top = a + (b - a) * fx
        bot = c + (d - c) * fx
        top, bot = np.where(top_ok, top, bot), np.where(bot_ok, bot, top)
        out = top + (bot - top) * fy
        lost = ~(top_ok | bot_ok)[..., 0]
        if np.any(lost):
            # all four centers fell outside the rim: nearest texel a little further in
            du, dv = u[lost] - 0.5, v[lost] - 0.5
            r = np.hypot(du, dv)
            limit = max(0.0, 0.5 - 1.0 / min(width, height))
            scale = np.where(r > limit, limit / np.where(r > 0.0, r, 1.0), 1.0)
            i = np.clip(np.floor((0.5 + du * scale) * width).astype(np.int64), 0, width - 1)
            j = np.clip(np.floor((0.5 + dv * scale) * height).astype(np.int64), 0, height - 1)
            out[lost] = tex[j, i]
        return out

    top = a + (b - a) * fx
    bot = c + (d - c) * fx
    return top + (bot - top) * fy


def sample_directions(env: EnvironmentMap, dirs: np.ndarray, nudge: bool = False) -> np.ndarray:
    """
    Bilinear lookup for an array of unit directions (..., 3)

    Args:
        nudge: replace the SphereMap singular direction instead of raising
    """
    if nudge and env.param is Parameterization.SPHEREMAP:
        dirs = nudge_singular(dirs)
    u, v = directions_to_uv(dirs, env.param)
    return sample_uv(env, u, v)


def sample_bilinear(m: EnvironmentMap, d: Union[UnitDirection, Sequence[float]]) -> RGBA:
    """
    Bilinear blend of the four texels nearest to direction d

    Raises:
        SingularityError: SphereMap lookup of (0, 0, -1)
    """
    arr = _unit_array(d)
    out = sample_directions(m, arr[None, :])[0]
    return tuple(float(c) for c in out)


def convert(m: EnvironmentMap, target: Union[Parameterization, str],
            width: int, height: int) -> EnvironmentMap:
    """
    Resample a map into another parameterization and/or size

    Each output texel is the bilinear sample of m along the direction through
    the output texel center. SphereMap output texels outside the disc are
    transparent black.
    """
    target = Parameterization.parse(target)
    validate_map_size(width, height, target)
    dirs, valid = texel_directions(width, height, target)
    out = np.zeros((height, width, 4), dtype=np.float32)
    out[valid] = sample_directions(m, dirs[valid])
    logger.debug(f"Converted {m!r} -> {target.value} {width}x{height}")
    return EnvironmentMap(out, target)
