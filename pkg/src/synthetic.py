"""
Synthetic Rig Generator for EmbedMap
Renders analytic environments (and an optional moving user billboard) into
virtual capture cameras, and emits the exact ground-truth LatLong map
"""
from __future__ import annotations
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from camera import CameraIntrinsics, CameraPose, CameraView, RigCamera, pixel_center_rays, save_rig
from envmap import EnvironmentMap, Parameterization
from errors import ValidationError
from image_io import save_envmap, save_image

logger = logging.getLogger(__name__)

RadianceFn = Callable[[np.ndarray], np.ndarray]

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


# ---------------------------------------------------------------------------
# Analytic environments: directions (N, 3) -> RGBA (N, 4)

def _rgba(rgb: np.ndarray) -> np.ndarray:
    return np.concatenate([rgb, np.ones(rgb.shape[:-1] + (1,))], axis=-1)


def constant_env(color: Sequence[float] = (0.5, 0.5, 0.5)) -> RadianceFn:
    rgb = np.asarray(color, dtype=np.float64)
    return lambda dirs: _rgba(np.broadcast_to(rgb, dirs.shape).copy())


def gradient_env() -> RadianceFn:
    """Smooth linear gradient over the sphere"""
    return lambda dirs: _rgba(0.5 + 0.4 * dirs)


def color_wheel_env() -> RadianceFn:
    """Hue by azimuth, fading to grey toward the poles"""
    def radiance(dirs: np.ndarray) -> np.ndarray:
        phi = np.arctan2(dirs[:, 0], -dirs[:, 2])
        wheel = np.stack([0.5 + 0.4 * np.cos(phi),
                          0.5 + 0.4 * np.cos(phi - 2.0 * np.pi / 3.0),
                          0.5 + 0.4 * np.cos(phi + 2.0 * np.pi / 3.0)], axis=-1)
        y2 = (dirs[:, 1] ** 2)[:, None]
        return _rgba((1.0 - y2) * wheel + y2 * 0.5)
    return radiance


def disc_light_env(direction: Sequence[float] = (0.0, 1.0, 0.0), radius_deg: float = 20.0,
                   color: Sequence[float] = (1.0, 0.95, 0.8), ambient: float = 0.05) -> RadianceFn:
    """Dim ambient sphere with one bright disc"""
    axis = np.asarray(direction, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    cos_r = math.cos(math.radians(radius_deg))
    rgb = np.asarray(color, dtype=np.float64)

    def radiance(dirs: np.ndarray) -> np.ndarray:
        inside = (dirs @ axis >= cos_r)[:, None]
        return _rgba(np.where(inside, rgb, ambient))
    return radiance


ENVIRONMENTS: Dict[str, Callable[..., RadianceFn]] = {
    "constant": constant_env,
    "gradient": gradient_env,
    "color-wheel": color_wheel_env,
    "disc-light": disc_light_env,
}


def environment(name: str, **kwargs) -> RadianceFn:
    try:
        return ENVIRONMENTS[name](**kwargs)
    except KeyError:
        raise ValidationError(f"Unknown analytic environment: {name}")


# ---------------------------------------------------------------------------
# Rig description

@dataclass
class BillboardSpec:
    """Flat-colored user disc facing the capture point, moving linearly over the frames"""
    start: Tuple[float, float, float]
    end: Tuple[float, float, float]
    radius: float = 0.5
    color: Tuple[float, float, float] = (1.0, 0.0, 0.0)

    def position(self, frame_offset: int, frame_count: int) -> np.ndarray:
        t = frame_offset / (frame_count - 1) if frame_count > 1 else 0.0
        start = np.asarray(self.start, dtype=np.float64)
        return start + t * (np.asarray(self.end, dtype=np.float64) - start)

    def coverage(self, dirs: np.ndarray, position: np.ndarray) -> np.ndarray:
        """Rays from the capture point that hit the disc"""
        dist = float(np.linalg.norm(position))
        if dist <= self.radius:
            return np.ones(dirs.shape[:-1], dtype=bool)
        cos_half = math.cos(math.asin(self.radius / dist))
        return dirs @ (position / dist) >= cos_half


@dataclass
class SyntheticRigSpec:
    camera_count: int = 6
    fov_deg: float = 90.0
    image_width: int = 256
    image_height: int = 256
    environment: str = "gradient"
    env_color: Tuple[float, float, float] = (0.5, 0.5, 0.5)
    user: Optional[BillboardSpec] = None
    first_frame: int = 0
    frame_count: int = 1
    frame_format: str = "png"
    ground_truth_size: Tuple[int, int] = (256, 128)

    def __post_init__(self):
        if self.camera_count < 1:
            raise ValidationError("camera_count must be >= 1")
        if not 0.0 < self.fov_deg < 180.0:
            raise ValidationError(f"FOV must lie in (0, 180): {self.fov_deg}")
        if self.image_width < 1 or self.image_height < 1 or self.frame_count < 1:
            raise ValidationError("image size and frame_count must be >= 1")
        if self.frame_format not in ("png", "pfm"):
            raise ValidationError(f"frame_format must be png or pfm: {self.frame_format}")
        if self.environment not in ENVIRONMENTS:
            raise ValidationError(f"Unknown analytic environment: {self.environment}")

    @property
    def frame_indices(self) -> range:
        return range(self.first_frame, self.first_frame + self.frame_count)

    def radiance(self) -> RadianceFn:
        if self.environment == "constant":
            return constant_env(self.env_color)
        return environment(self.environment)


def camera_directions(count: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """(forward, up) per camera: cube rig for 6, forward for 1, Fibonacci otherwise"""
    if count == 6:
        axes = [((1, 0, 0), (0, 1, 0)), ((-1, 0, 0), (0, 1, 0)),
                ((0, 1, 0), (0, 0, 1)), ((0, -1, 0), (0, 0, -1)),
                ((0, 0, 1), (0, 1, 0)), ((0, 0, -1), (0, 1, 0))]
        return [(np.array(f, dtype=np.float64), np.array(u, dtype=np.float64)) for f, u in axes]
    if count == 1:
        return [(np.array([0.0, 0.0, -1.0]), np.array([0.0, 1.0, 0.0]))]
    out = []
    for i in range(count):
        y = 1.0 - 2.0 * (i + 0.5) / count
        r = math.sqrt(max(0.0, 1.0 - y * y))
        phi = i * GOLDEN_ANGLE
        out.append((np.array([r * math.cos(phi), y, r * math.sin(phi)]), np.array([0.0, 1.0, 0.0])))
    return out


def rig_cameras(spec: SyntheticRigSpec) -> List[RigCamera]:
    """Cameras of the synthetic rig, all centered on the capture point"""
    intrinsics = CameraIntrinsics.from_fov(spec.fov_deg, spec.image_width, spec.image_height)
    ext = spec.frame_format
    return [
        RigCamera(intrinsics=intrinsics,
                  pose=CameraPose.looking_at(forward, up=up),
                  frames=f"cam{k}/frame_%05d.{ext}",
                  clean_plate=f"cam{k}/clean_plate.{ext}")
        for k, (forward, up) in enumerate(camera_directions(spec.camera_count))
    ]


def render_frame(spec: SyntheticRigSpec, cam: RigCamera,
                 frame_index: Optional[int] = None) -> np.ndarray:
    """
    Straight-alpha RGBA frame: the analytic environment with the user
    billboard on top; alpha is the user coverage. frame_index None renders
    the clean plate.
    """
    view = cam.view()
    dirs = pixel_center_rays(view).reshape(-1, 3)
    rgba = spec.radiance()(dirs)
    rgba[:, 3] = 0.0
    if spec.user is not None and frame_index is not None:
        position = spec.user.position(frame_index - spec.first_frame, spec.frame_count)
        covered = spec.user.coverage(dirs, position)
        rgba[covered, :3] = np.asarray(spec.user.color, dtype=np.float64)
        rgba[covered, 3] = 1.0
    k = cam.intrinsics
    return rgba.reshape(k.height, k.width, 4).astype(np.float32)


def synthetic_views(spec: SyntheticRigSpec, frame_index: int) -> List[CameraView]:
    """In-memory views of one frame (straight alpha)"""
    return [cam.view(render_frame(spec, cam, frame_index)) for cam in rig_cameras(spec)]


def ground_truth_map(spec: SyntheticRigSpec, param: Parameterization = Parameterization.LATLONG,
                     size: Optional[Tuple[int, int]] = None) -> EnvironmentMap:
    width, height = size or spec.ground_truth_size
    return EnvironmentMap.from_function(width, height, param, spec.radiance())


def psnr(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None, peak: float = 1.0) -> float:
    """PSNR in dB over RGB; mask selects the (H, W) texels that count"""
    a = np.asarray(a, dtype=np.float64)[..., :3]
    b = np.asarray(b, dtype=np.float64)[..., :3]
    diff = (a - b) ** 2
    if mask is not None:
        diff = diff[mask]
    mse = float(np.mean(diff))
    return math.inf if mse == 0.0 else 10.0 * math.log10(peak * peak / mse)


def pole_rows_mask(height: int, width: int) -> np.ndarray:
    """All texels except the top and bottom rows"""
    mask = np.ones((height, width), dtype=bool)
    mask[0, :] = False
    mask[-1, :] = False
    return mask


def generate_synthetic_rig(spec: SyntheticRigSpec, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Write rig.json, per-camera frames and clean plates, ground_truth.pfm and
    ready-to-run scene.json / pipeline.json

    Raises:
        OSError: out_dir is not writable
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cameras = rig_cameras(spec)
    ext = spec.frame_format

    for k, cam in enumerate(cameras):
        (out / f"cam{k}").mkdir(exist_ok=True)
        save_image(out / cam.clean_plate, render_frame(spec, cam, None))
        for index in spec.frame_indices:
            save_image(out / (cam.frames % index), render_frame(spec, cam, index))

    save_rig(out / "rig.json", cameras)
    gt_w, gt_h = spec.ground_truth_size
    save_envmap(ground_truth_map(spec), out / "ground_truth.pfm")

    scene = {
        "spheres": [{"center": [0.0, 0.0, 0.0], "radius": 1.0}],
        "meshes": [],
        "camera": {"fx": 110.0, "fy": 110.0, "cx": 64.0, "cy": 64.0, "width": 128, "height": 128,
                   "rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1], "translation": [0.0, 0.0, -4.0]},
        "f0": 0.04,
        "base_color": [0.1, 0.1, 0.1],
        "background": [0.0, 0.0, 0.0],
    }
    (out / "scene.json").write_text(json.dumps(scene, indent=2), encoding="utf-8")

    pipeline_cfg = {
        "rig": "rig.json",
        "background": "ground_truth.pfm",
        "scene": "scene.json",
        "frames": [spec.first_frame, spec.first_frame + spec.frame_count - 1],
        "map": {"size": f"{gt_w}x{gt_h}", "param": "latlong"},
        "matting": {"mode": "alpha"},
        "output_dir": "output",
        "workers": 1,
    }
    (out / "pipeline.json").write_text(json.dumps(pipeline_cfg, indent=2), encoding="utf-8")

    logger.info(f"Synthetic rig: {len(cameras)} camera(s), {spec.frame_count} frame(s), "
                f"{spec.environment} environment -> {out}")
    return {
        "rig": out / "rig.json",
        "ground_truth": out / "ground_truth.pfm",
        "scene": out / "scene.json",
        "pipeline": out / "pipeline.json",
    }
