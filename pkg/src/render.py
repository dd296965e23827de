"""
Reflection Renderer for EmbedMap
Ray casts virtual objects (analytic spheres, triangle meshes) and shades
them with a Fresnel-weighted environment lookup plus a local term
"""
from __future__ import annotations
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from camera import CameraView, camera_from_dict, pixel_center_rays
from config import config_manager
from envmap import EnvironmentMap, UnitDirection, sample_directions
from errors import ConfigError, ValidationError
from workers import DEFAULT_BAND_ROWS, map_bands

logger = logging.getLogger(__name__)

T_MIN = 1e-9
NORMAL_TOLERANCE = 1e-4
TRIANGLE_CHUNK = 64


# ---------------------------------------------------------------------------
# Scene types

@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).reshape(3)
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValidationError(f"Sphere radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", center)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangles with unit per-vertex normals"""
    vertices: np.ndarray
    normals: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        norms = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if norms.shape != verts.shape:
            raise ValidationError("Mesh needs exactly one normal per vertex")
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise ValidationError("Mesh triangle index out of range")
        if len(norms) and np.any(np.abs(np.linalg.norm(norms, axis=1) - 1.0) > NORMAL_TOLERANCE):
            raise ValidationError("Mesh vertex normals must be unit length")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "normals", norms)
        object.__setattr__(self, "triangles", tris)


SceneObject = Union[Sphere, TriangleMesh]


@dataclass
class Scene:
    objects: List[SceneObject]
    camera: CameraView
    background_color: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    base_color: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    f0: float = 0.04

    def __post_init__(self):
        if not 0.0 <= self.f0 <= 1.0:
            raise ValidationError(f"f0 must lie in [0, 1], got {self.f0}")
        for name in ("background_color", "base_color"):
            value = tuple(float(c) for c in getattr(self, name))
            if len(value) != 3 or not all(math.isfinite(c) for c in value):
                raise ValidationError(f"{name} must be 3 finite numbers")
            setattr(self, name, value)


@dataclass
class Hit:
    point: np.ndarray
    normal: UnitDirection
    object_id: int
    distance: float


@dataclass
class RenderOutput:
    image: np.ndarray
    hit_mask: Optional[np.ndarray] = None


# ---------------------------------------------------------------------------
# Shading terms

def reflect_vector(incident: UnitDirection, normal: UnitDirection) -> UnitDirection:
    """Mirror direction r = i - 2 (i . n) n"""
    i, n = incident.as_array(), normal.as_array()
    return UnitDirection.from_array(i - 2.0 * float(np.dot(i, n)) * n)


def reflect_array(incident: np.ndarray, normal: np.ndarray) -> np.ndarray:
    r = incident - 2.0 * np.sum(incident * normal, axis=-1, keepdims=True) * normal
    return r / np.linalg.norm(r, axis=-1, keepdims=True)


def fresnel_array(cos_theta: np.ndarray, f0: float) -> np.ndarray:
    """Schlick's approximation; exact endpoints F(1) = f0 and F(0) = 1"""
    cos_theta = np.asarray(cos_theta, dtype=np.float64)
    if not 0.0 <= f0 <= 1.0:
        raise ValidationError(f"f0 must lie in [0, 1], got {f0}")
    if np.any(cos_theta < 0.0) or np.any(cos_theta > 1.0) or np.any(np.isnan(cos_theta)):
        raise ValidationError("cos_theta must lie in [0, 1]")
    f = np.minimum(f0 + (1.0 - f0) * np.power(1.0 - cos_theta, 5), 1.0)
    return np.where(cos_theta == 0.0, 1.0, f)


def fresnel(cos_theta: float, f0: float) -> float:
    """F = f0 + (1 - f0)(1 - cos_theta)^5"""
    return float(fresnel_array(np.float64(cos_theta), f0))


# ---------------------------------------------------------------------------
# Ray casting

def _intersect_sphere(sphere: Sphere, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    oc = origins - sphere.center
    b = np.sum(oc * dirs, axis=-1)
    c = np.sum(oc * oc, axis=-1) - sphere.radius * sphere.radius
    disc = b * b - c
    sq = np.sqrt(np.maximum(disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    t = np.where(t0 > T_MIN, t0, np.where(t1 > T_MIN, t1, np.inf))
    return np.where(disc >= 0.0, t, np.inf)


def _intersect_mesh(mesh: TriangleMesh, origins: np.ndarray,
                    dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest hit per ray: distance (inf on miss) and interpolated normal"""
    n_rays = len(dirs)
    best_t = np.full(n_rays, np.inf)
    best_tri = np.zeros(n_rays, dtype=np.int64)
    best_u = np.zeros(n_rays)
    best_v = np.zeros(n_rays)

    verts, tris = mesh.vertices, mesh.triangles
    for start in range(0, len(tris), TRIANGLE_CHUNK):
        chunk = tris[start:start + TRIANGLE_CHUNK]
        v0 = verts[chunk[:, 0]]
        e1 = verts[chunk[:, 1]] - v0
        e2 = verts[chunk[:, 2]] - v0

        p = np.cross(dirs[:, None, :], e2[None, :, :])
        det = np.sum(e1[None] * p, axis=-1)
        ok = np.abs(det) > 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = origins[:, None, :] - v0[None]
        u = np.sum(s * p, axis=-1) * inv
        q = np.cross(s, e1[None])
        v = np.sum(dirs[:, None, :] * q, axis=-1) * inv
        t = np.sum(e2[None] * q, axis=-1) * inv
        hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > T_MIN)
        t = np.where(hit, t, np.inf)

        local = np.argmin(t, axis=1)
        rows = np.arange(n_rays)
        t_min = t[rows, local]
        closer = t_min < best_t
        best_t = np.where(closer, t_min, best_t)
        best_tri = np.where(closer, start + local, best_tri)
        best_u = np.where(closer, u[rows, local], best_u)
        best_v = np.where(closer, v[rows, local], best_v)

    corners = tris[best_tri] if len(tris) else np.zeros((n_rays, 3), dtype=np.int64)
    normals = mesh.normals
    if len(normals) == 0:
        return best_t, np.zeros((n_rays, 3))
    n = ((1.0 - best_u - best_v)[:, None] * normals[corners[:, 0]]
         + best_u[:, None] * normals[corners[:, 1]]
         + best_v[:, None] * normals[corners[:, 2]])
    length = np.linalg.norm(n, axis=1, keepdims=True)
    n = n / np.where(length > 0.0, length, 1.0)
    return best_t, n


def intersect_rays(scene: Scene, origins: np.ndarray,
                   dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Nearest positive hit for every ray

    Returns:
        (distance, normal, object_id): inf / 0 / -1 on miss; normals face the ray origin
    """
    origins = np.broadcast_to(np.asarray(origins, dtype=np.float64), dirs.shape)
    n_rays = len(dirs)
    best_t = np.full(n_rays, np.inf)
    best_n = np.zeros((n_rays, 3))
    best_id = np.full(n_rays, -1, dtype=np.int64)

    for object_id, obj in enumerate(scene.objects):
        if isinstance(obj, Sphere):
            t = _intersect_sphere(obj, origins, dirs)
            points = origins + np.where(np.isfinite(t), t, 0.0)[:, None] * dirs
            n = (points - obj.center) / obj.radius
        else:
            t, n = _intersect_mesh(obj, origins, dirs)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_n = np.where(closer[:, None], n, best_n)
        best_id = np.where(closer, object_id, best_id)

    facing_away = np.sum(best_n * dirs, axis=-1) > 0.0
    best_n = np.where(facing_away[:, None], -best_n, best_n)
    return best_t, best_n, best_id


def intersect(scene: Scene, origin: Sequence[float],
              direction: Union[UnitDirection, Sequence[float]]) -> Optional[Hit]:
    """Nearest positive-distance intersection along one ray, or None"""
    d = direction if isinstance(direction, UnitDirection) else UnitDirection.from_array(direction)
    o = np.asarray(origin, dtype=np.float64).reshape(1, 3)
    dirs = d.as_array()[None, :]
    t, n, ids = intersect_rays(scene, o, dirs)
    if not np.isfinite(t[0]):
        return None
    return Hit(point=o[0] + t[0] * dirs[0], normal=UnitDirection.from_array(n[0]),
               object_id=int(ids[0]), distance=float(t[0]))


def shade(scene: Scene, env: EnvironmentMap, dirs: np.ndarray,
          normals: np.ndarray) -> np.ndarray:
    """(1 - F) base n.v + F env(reflect(d, n)) for hit rays"""
    cos_theta = np.clip(-np.sum(dirs * normals, axis=-1), 0.0, 1.0)
    f = fresnel_array(cos_theta, scene.f0)[:, None]
    reflected = reflect_array(dirs, normals)
    env_rgb = sample_directions(env, reflected, nudge=True)[:, :3]
    base = np.asarray(scene.base_color, dtype=np.float64)
    return (1.0 - f) * base * cos_theta[:, None] + f * env_rgb


def render_reflection(scene: Scene, env: EnvironmentMap, workers: int = 1,
                      band_rows: int = DEFAULT_BAND_ROWS) -> RenderOutput:
    """
    Ray cast the scene from its camera, one primary ray per pixel center,
    no secondary bounces; misses get the background color
    """
    cam = scene.camera
    k = cam.intrinsics
    origin = cam.pose.center
    background = np.asarray(scene.background_color, dtype=np.float64)

    def band(rows: slice) -> Tuple[np.ndarray, np.ndarray]:
        dirs = pixel_center_rays(cam, rows).reshape(-1, 3)
        t, normals, _ = intersect_rays(scene, origin, dirs)
        hit = np.isfinite(t)
        color = np.broadcast_to(background, dirs.shape).copy()
        if np.any(hit):
            color[hit] = shade(scene, env, dirs[hit], normals[hit])
        n_rows = rows.stop - rows.start
        return color.reshape(n_rows, k.width, 3), hit.reshape(n_rows, k.width)

    parts = map_bands(band, k.height, workers, band_rows)
    image = np.concatenate([p[0] for p in parts], axis=0).astype(np.float32)
    hit_mask = np.concatenate([p[1] for p in parts], axis=0)
    logger.debug(f"Rendered {k.width}x{k.height}: {int(hit_mask.sum())} hit pixels")
    return RenderOutput(image=image, hit_mask=hit_mask)


# ---------------------------------------------------------------------------
# Scene files

def _parse_obj_index(token: str, count: int) -> int:
    idx = int(token)
    return idx - 1 if idx > 0 else count + idx


def load_obj(path: Union[str, Path]) -> TriangleMesh:
    """
    Load the v / vn / f subset of Wavefront OBJ

    Polygons are fanned into triangles. Corners without a normal index get
    the area-weighted vertex normal.
    """
    positions: List[List[float]] = []
    file_normals: List[List[float]] = []
    corners: List[Tuple[int, int]] = []

    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v":
                    positions.append([float(x) for x in parts[1:4]])
                elif parts[0] == "vn":
                    file_normals.append([float(x) for x in parts[1:4]])
                elif parts[0] == "f":
                    face = []
                    for token in parts[1:]:
                        fields = token.split("/")
                        vi = _parse_obj_index(fields[0], len(positions))
                        ni = (_parse_obj_index(fields[2], len(file_normals))
                              if len(fields) > 2 and fields[2] else -1)
                        face.append((vi, ni))
                    for k in range(1, len(face) - 1):
                        corners.extend([face[0], face[k], face[k + 1]])
            except (ValueError, IndexError) as e:
                raise ConfigError(f"{path}:{line_no}: bad OBJ line: {e}")

    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    corner_arr = np.asarray(corners, dtype=np.int64).reshape(-1, 2)
    if corner_arr.size and (corner_arr[:, 0].min() < 0 or corner_arr[:, 0].max() >= len(pos)):
        raise ConfigError(f"{path}: face references a missing vertex")

    # area-weighted vertex normals
    tri_pos = corner_arr[:, 0].reshape(-1, 3)
    face_n = np.cross(pos[tri_pos[:, 1]] - pos[tri_pos[:, 0]], pos[tri_pos[:, 2]] - pos[tri_pos[:, 0]])
    vertex_n = np.zeros_like(pos)
    for k in range(3):
        np.add.at(vertex_n, tri_pos[:, k], face_n)

    fn = np.asarray(file_normals, dtype=np.float64).reshape(-1, 3)
    keys = {}
    vertices, normals, indices = [], [], []
    for vi, ni in map(tuple, corner_arr):
        key = (vi, ni)
        if key not in keys:
            if ni >= 0:
                if ni >= len(fn):
                    raise ConfigError(f"{path}: face references a missing normal")
                n = fn[ni]
            else:
                n = vertex_n[vi]
            length = np.linalg.norm(n)
            keys[key] = len(vertices)
            vertices.append(pos[vi])
            normals.append(n / length if length > 0 else np.array([0.0, 0.0, 1.0]))
        indices.append(keys[key])

    mesh = TriangleMesh(np.asarray(vertices).reshape(-1, 3), np.asarray(normals).reshape(-1, 3),
                        np.asarray(indices, dtype=np.int64).reshape(-1, 3))
    logger.info(f"Loaded mesh {Path(path).name}: {len(mesh.triangles)} triangles")
    return mesh


def load_scene(path: Union[str, Path]) -> Scene:
    """
    Load a scene JSON: spheres, OBJ meshes (paths relative to the file),
    camera (rig camera object), f0, base_color, background; missing shading
    values come from the [render] section of the user configuration

    Raises:
        ConfigError: unreadable or invalid scene
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read scene {path}: {e}")
    if "camera" not in doc:
        raise ConfigError(f"Scene {path} has no camera")

    try:
        objects: List[SceneObject] = [
            Sphere(np.asarray(s["center"], dtype=np.float64), float(s["radius"]))
            for s in doc.get("spheres", [])
        ]
        for mesh_path in doc.get("meshes", []):
            mesh_file = Path(mesh_path)
            if not mesh_file.is_absolute():
                mesh_file = path.parent / mesh_file
            objects.append(load_obj(mesh_file))
        camera = camera_from_dict(doc["camera"]).view()
        defaults = config_manager.config.render
        return Scene(
            objects=objects,
            camera=camera,
            background_color=tuple(doc.get("background", defaults.background)),
            base_color=tuple(doc.get("base_color", defaults.base_color)),
            f0=float(doc.get("f0", defaults.f0)),
        )
    except (KeyError, TypeError, ValueError, OSError) as e:
        raise ConfigError(f"Invalid scene {path}: {e}")
