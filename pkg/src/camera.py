"""
Pinhole Camera Model for EmbedMap
Projection, ray generation, frame sampling and rig description files

Cameras look down -z with y up (right-handed). The pose maps world to
camera: q = R p + t. Pixel (i, j) covers [i, i+1) x [j, j+1), so its center
is at (i + 0.5, j + 0.5); image y grows downward.
"""
from __future__ import annotations
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from envmap import RGBA, UnitDirection
from errors import BehindCameraError, ConfigError, ValidationError

logger = logging.getLogger(__name__)

POSE_TOLERANCE = 1e-6
# slack for rays that land exactly on the frame border
EDGE_EPS = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels"""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (math.isfinite(self.fx) and math.isfinite(self.fy)) or self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"Focal lengths must be finite and positive: {self.fx}, {self.fy}")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValidationError(f"Image size must be >= 1x1: {self.width}x{self.height}")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValidationError(f"Principal point ({self.cx}, {self.cy}) outside the image")

    @classmethod
    def from_fov(cls, fov_deg: float, width: int, height: int) -> "CameraIntrinsics":
        """Square pixels, centered principal point, horizontal field of view"""
        if not 0.0 < fov_deg < 180.0:
            raise ValidationError(f"FOV must lie in (0, 180): {fov_deg}")
        f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
        return cls(f, f, width / 2.0, height / 2.0, int(width), int(height))


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Rigid world-to-camera transform"""
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise ValidationError("Pose contains non-finite values")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=POSE_TOLERANCE, rtol=0.0):
            raise ValidationError("Pose rotation is not orthonormal")
        if abs(float(np.linalg.det(rot)) - 1.0) > POSE_TOLERANCE:
            raise ValidationError("Pose rotation must have determinant +1")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def looking_at(cls, forward: Sequence[float], position: Sequence[float] = (0.0, 0.0, 0.0),
                   up: Sequence[float] = (0.0, 1.0, 0.0)) -> "CameraPose":
        """Camera at `position` whose optical axis points along `forward`"""
        fwd = np.asarray(forward, dtype=np.float64)
        fwd = fwd / np.linalg.norm(fwd)
        up_v = np.asarray(up, dtype=np.float64)
        if np.linalg.norm(np.cross(fwd, up_v)) < 1e-9:
            up_v = np.array([0.0, 0.0, -1.0]) if fwd[1] > 0 else np.array([0.0, 0.0, 1.0])
        right = np.cross(fwd, up_v)
        right /= np.linalg.norm(right)
        true_up = np.cross(right, fwd)
        rot = np.stack([right, true_up, -fwd])
        trans = -rot @ np.asarray(position, dtype=np.float64)
        return cls(rot, trans)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world space"""
        return -self.rotation.T @ self.translation

    @property
    def optical_axis(self) -> np.ndarray:
        """World-space viewing direction"""
        return -self.rotation[2]


@dataclass(frozen=True, eq=False)
class CameraView:
    """
    One camera of a rig: intrinsics, pose and optionally one frame of pixels
    (float32 RGBA of shape (height, width, 4)). A view without a frame
    describes geometry only, e.g. the render camera.
    """
    intrinsics: CameraIntrinsics
    pose: CameraPose
    frame: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.frame is None:
            return
        frame = np.asarray(self.frame, dtype=np.float32)
        expected = (self.intrinsics.height, self.intrinsics.width, 4)
        if frame.shape != expected:
            raise ValidationError(f"Frame shape {frame.shape} does not match intrinsics {expected}")
        object.__setattr__(self, "frame", frame)

    def with_frame(self, frame: np.ndarray) -> "CameraView":
        return CameraView(self.intrinsics, self.pose, frame)


# ---------------------------------------------------------------------------
# Vectorized geometry

def project_points(cam: CameraView, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project world points (..., 3); returns pixel x, pixel y and depth (may be <= 0)"""
    k = cam.intrinsics
    q = np.asarray(points, dtype=np.float64) @ cam.pose.rotation.T + cam.pose.translation
    depth = -q[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = k.cx + k.fx * (q[..., 0] / depth)
        y = k.cy - k.fy * (q[..., 1] / depth)
    return x, y, depth


def pixel_rays(cam: CameraView, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """World-space unit ray directions through pixel coordinates"""
    k = cam.intrinsics
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    local = np.stack([(xs - k.cx) / k.fx, -(ys - k.cy) / k.fy, -np.ones_like(xs)], axis=-1)
    world = local @ cam.pose.rotation
    return world / np.linalg.norm(world, axis=-1, keepdims=True)


def pixel_center_rays(cam: CameraView, rows: Optional[slice] = None) -> np.ndarray:
    """Rays through every pixel center, shape (rows, width, 3)"""
    k = cam.intrinsics
    j = np.arange(k.height, dtype=np.float64)[rows if rows is not None else slice(None)] + 0.5
    i = np.arange(k.width, dtype=np.float64) + 0.5
    xs, ys = np.meshgrid(i, j)
    return pixel_rays(cam, xs, ys)


def sample_frame(frame: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Bilinear frame lookup at continuous pixel coordinates, clamped at the borders"""
    height, width = frame.shape[0], frame.shape[1]
    x = np.asarray(px, dtype=np.float64) - 0.5
    y = np.asarray(py, dtype=np.float64) - 0.5
    x0f = np.floor(x)
    y0f = np.floor(y)
    fx = (x - x0f)[..., None]
    fy = (y - y0f)[..., None]
    x0 = np.clip(x0f.astype(np.int64), 0, width - 1)
    x1 = np.clip(x0f.astype(np.int64) + 1, 0, width - 1)
    y0 = np.clip(y0f.astype(np.int64), 0, height - 1)
    y1 = np.clip(y0f.astype(np.int64) + 1, 0, height - 1)

    a = frame[y0, x0].astype(np.float64)
    b = frame[y0, x1].astype(np.float64)
    c = frame[y1, x0].astype(np.float64)
    d = frame[y1, x1].astype(np.float64)
    top = a + (b - a) * fx
    bot = c + (d - c) * fx
    return top + (bot - top) * fy


def sample_view_directions(cam: CameraView, dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sample the frame along rays leaving the camera center

    Returns:
        (rgba, covered): float64 RGBA (..., 4), zero where not covered, and
        the coverage mask
    """
    if cam.frame is None:
        raise ValidationError("Camera view has no frame to sample")
    k = cam.intrinsics
    q = np.asarray(dirs, dtype=np.float64) @ cam.pose.rotation.T
    depth = -q[..., 2]
    front = depth > 0.0
    safe = np.where(front, depth, 1.0)
    px = k.cx + k.fx * (q[..., 0] / safe)
    py = k.cy - k.fy * (q[..., 1] / safe)
    covered = (front
               & (px >= -EDGE_EPS) & (px <= k.width + EDGE_EPS)
               & (py >= -EDGE_EPS) & (py <= k.height + EDGE_EPS))
    rgba = sample_frame(cam.frame, np.where(covered, px, 0.0), np.where(covered, py, 0.0))
    return np.where(covered[..., None], rgba, 0.0), covered


# ---------------------------------------------------------------------------
# Operations

def project(cam: CameraView, p: Sequence[float]) -> Tuple[float, float, float]:
    """
    Project a world point to (pixel x, pixel y, depth)

    Raises:
        BehindCameraError: the point is at or behind the camera plane
    """
    point = np.asarray(p, dtype=np.float64)
    q = cam.pose.rotation @ point + cam.pose.translation
    if q[2] >= 0.0:
        raise BehindCameraError(f"Point {tuple(point)} is not in front of the camera")
    x, y, depth = project_points(cam, point)
    return float(x), float(y), float(depth)


def pixel_to_ray(cam: CameraView, x: float, y: float) -> UnitDirection:
    """World-space unit direction through a pixel coordinate"""
    return UnitDirection.from_array(pixel_rays(cam, np.float64(x), np.float64(y)))


def sample_view(cam: CameraView, d: Union[UnitDirection, Sequence[float]]) -> Optional[RGBA]:
    """Bilinear frame sample along d from the camera center, or None when d misses the frame"""
    arr = d.as_array() if isinstance(d, UnitDirection) else UnitDirection.from_array(d).as_array()
    rgba, covered = sample_view_directions(cam, arr[None, :])
    if not covered[0]:
        return None
    return tuple(float(c) for c in rgba[0])


# ---------------------------------------------------------------------------
# Rig files

@dataclass
class RigCamera:
    """One entry of a rig description file"""
    intrinsics: CameraIntrinsics
    pose: CameraPose
    frames: str = ""
    clean_plate: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def frame_path(self, index: int) -> Path:
        return Path(self.frames % index)

    def view(self, frame: Optional[np.ndarray] = None) -> CameraView:
        return CameraView(self.intrinsics, self.pose, frame)


def camera_from_dict(entry: Dict[str, Any], base_dir: Optional[Path] = None) -> RigCamera:
    """Build a RigCamera from its JSON object; relative paths resolve against base_dir"""
    try:
        intrinsics = CameraIntrinsics(
            float(entry["fx"]), float(entry["fy"]), float(entry["cx"]), float(entry["cy"]),
            int(entry["width"]), int(entry["height"]),
        )
        rotation = np.asarray(entry.get("rotation", np.eye(3).ravel()), dtype=np.float64)
        translation = np.asarray(entry.get("translation", [0.0, 0.0, 0.0]), dtype=np.float64)
        if rotation.size != 9 or translation.size != 3:
            raise ConfigError("rotation needs 9 numbers and translation 3")
        pose = CameraPose(rotation.reshape(3, 3), translation)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid camera entry: {e}")

    def resolve(p: Optional[str]) -> Optional[str]:
        if not p:
            return p
        path = Path(p)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return str(path)

    known = {"fx", "fy", "cx", "cy", "width", "height", "rotation", "translation", "frames", "clean_plate"}
    return RigCamera(
        intrinsics=intrinsics,
        pose=pose,
        frames=resolve(entry.get("frames", "")) or "",
        clean_plate=resolve(entry.get("clean_plate")),
        extra={k: v for k, v in entry.items() if k not in known},
    )


def camera_to_dict(cam: RigCamera) -> Dict[str, Any]:
    k = cam.intrinsics
    out = {
        "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
        "width": k.width, "height": k.height,
        "rotation": [float(v) for v in cam.pose.rotation.ravel()],
        "translation": [float(v) for v in cam.pose.translation],
        "frames": cam.frames,
    }
    if cam.clean_plate:
        out["clean_plate"] = cam.clean_plate
    out.update(cam.extra)
    return out


def load_rig(path: Union[str, Path]) -> List[RigCamera]:
    """
    Load {"cameras": [...]} from a rig JSON file

    Raises:
        ConfigError: unreadable or invalid rig
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read rig {path}: {e}")
    entries = doc.get("cameras") if isinstance(doc, dict) else None
    if not entries:
        raise ConfigError(f"Rig {path} has no cameras")
    cameras = [camera_from_dict(entry, path.parent) for entry in entries]
    logger.info(f"Loaded rig {path.name} with {len(cameras)} camera(s)")
    return cameras


def save_rig(path: Union[str, Path], cameras: List[RigCamera]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"cameras": [camera_to_dict(c) for c in cameras]}, indent=2),
                    encoding="utf-8")
