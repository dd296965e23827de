# image_io.py
"""
Image and environment-map file formats
PFM (linear float), PNG/PPM (8-bit sRGB, gamma 2.2) and the JSON sidecar
"""
from __future__ import annotations
import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from envmap import EnvironmentMap, Parameterization
from errors import ImageFormatError

logger = logging.getLogger(__name__)

GAMMA = 2.2
PFM_EXTS = {".pfm"}
PNG_EXTS = {".png"}
PPM_EXTS = {".ppm"}
SUPPORTED = PFM_EXTS | PNG_EXTS | PPM_EXTS

PathLike = Union[str, Path]


def alpha_path(path: PathLike) -> Path:
    """Sibling single-channel PFM holding the alpha of an RGB PFM"""
    path = Path(path)
    return path.with_name(f"{path.stem}.alpha.pfm")


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}.json")


# ---------------------------------------------------------------------------
# Transfer function

def encode_srgb(linear: np.ndarray) -> np.ndarray:
    """Linear [0,1] floats to gamma-2.2 encoded uint8"""
    enc = np.power(np.clip(linear, 0.0, 1.0), 1.0 / GAMMA)
    return np.rint(enc * 255.0).astype(np.uint8)


def decode_srgb(encoded: np.ndarray) -> np.ndarray:
    """Gamma-2.2 encoded uint8 to linear float32"""
    return np.power(encoded.astype(np.float64) / 255.0, GAMMA).astype(np.float32)


# ---------------------------------------------------------------------------
# PFM

def _read_header_line(f) -> str:
    line = f.readline()
    if not line:
        raise ImageFormatError("Unexpected end of PFM header")
    return line.decode("ascii", errors="replace").strip()


def read_pfm(path: PathLike) -> np.ndarray:
    """
    Read a PFM file

    Returns:
        float32 array (height, width, 3) for "PF" or (height, width) for "Pf",
        top row first
    """
    with open(path, "rb") as f:
        identifier = _read_header_line(f)
        if identifier == "PF":
            channels = 3
        elif identifier == "Pf":
            channels = 1
        else:
            raise ImageFormatError(f"{path}: unrecognized PFM identifier {identifier!r}")

        dims = _read_header_line(f).split()
        if len(dims) != 2:
            raise ImageFormatError(f"{path}: bad PFM dimensions line {dims!r}")
        try:
            width, height = int(dims[0]), int(dims[1])
            scale = float(_read_header_line(f))
        except ValueError as e:
            raise ImageFormatError(f"{path}: bad PFM header: {e}")

        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * channels
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise ImageFormatError(f"{path}: truncated PFM raster ({len(raw)} of {count * 4} bytes)")
        data = np.frombuffer(raw, dtype=dtype)

    shape = (height, width, 3) if channels == 3 else (height, width)
    # PFM rows are stored bottom-up
    return np.flipud(data.reshape(shape)).astype(np.float32)


def write_pfm(path: PathLike, data: np.ndarray):
    """Write a (H, W, 3) "PF" or (H, W) "Pf" little-endian PFM"""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 3 and data.shape[2] == 3:
        identifier = "PF"
    elif data.ndim == 2:
        identifier = "Pf"
    else:
        raise ImageFormatError(f"PFM needs (H, W, 3) or (H, W) data, got {data.shape}")
    height, width = data.shape[0], data.shape[1]
    header = f"{identifier}\n{width} {height}\n-1.0\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(np.flipud(data)).astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# RGBA images (frames, renders)

def load_image(path: PathLike) -> np.ndarray:
    """
    Load an image as linear float32 RGBA (straight alpha)

    PFM alpha comes from the sibling ".alpha.pfm" when present; images
    without alpha get alpha = 1.
    """
    path = Path(path)
    ext = path.suffix.lower()
    if ext in PFM_EXTS:
        rgb = read_pfm(path)
        if rgb.ndim == 2:
            rgb = np.repeat(rgb[..., None], 3, axis=2)
        a_path = alpha_path(path)
        alpha = read_pfm(a_path) if a_path.exists() else np.ones(rgb.shape[:2], dtype=np.float32)
        if alpha.shape != rgb.shape[:2]:
            raise ImageFormatError(f"{a_path}: alpha size does not match {path}")
        return np.concatenate([rgb, alpha[..., None]], axis=2)

    if ext in PNG_EXTS | PPM_EXTS:
        try:
            with Image.open(path) as img:
                img = img.convert("RGBA")
                raw = np.asarray(img, dtype=np.uint8)
        except (OSError, ValueError) as e:
            raise ImageFormatError(f"{path}: {e}")
        rgba = np.empty(raw.shape, dtype=np.float32)
        rgba[..., :3] = decode_srgb(raw[..., :3])
        rgba[..., 3] = raw[..., 3].astype(np.float32) / 255.0
        return rgba

    raise ImageFormatError(f"Unsupported image format: {path}")


def save_image(path: PathLike, pixels: np.ndarray):
    """
    Save linear RGB or RGBA float pixels; the format follows the extension

    PNG keeps alpha, PPM drops it, PFM writes alpha to a sibling file.
    """
    path = Path(path)
    pixels = np.asarray(pixels, dtype=np.float32)
    if pixels.ndim != 3 or pixels.shape[2] not in (3, 4):
        raise ImageFormatError(f"Expected (H, W, 3|4) pixels, got {pixels.shape}")
    path.parent.mkdir(parents=True, exist_ok=True)
    ext = path.suffix.lower()

    if ext in PFM_EXTS:
        write_pfm(path, pixels[..., :3])
        if pixels.shape[2] == 4:
            write_pfm(alpha_path(path), pixels[..., 3])
        return

    if ext in PNG_EXTS | PPM_EXTS:
        rgb = encode_srgb(pixels[..., :3])
        if ext in PNG_EXTS and pixels.shape[2] == 4:
            alpha = np.rint(np.clip(pixels[..., 3], 0.0, 1.0) * 255.0).astype(np.uint8)
            Image.fromarray(np.dstack([rgb, alpha]), mode="RGBA").save(path)
        else:
            Image.fromarray(rgb, mode="RGB").save(path)
        return

    raise ImageFormatError(f"Unsupported image format: {path}")


# ---------------------------------------------------------------------------
# Environment maps

def save_envmap(m: EnvironmentMap, path: PathLike):
    """
    Write a map plus its {"param": ...} sidecar

    PFM stores the premultiplied texels as they are; 8-bit formats store
    straight alpha.
    """
    path = Path(path)
    texels = m.texels
    if path.suffix.lower() in PNG_EXTS | PPM_EXTS:
        alpha = texels[..., 3:4]
        texels = np.concatenate(
            [np.divide(texels[..., :3], alpha, out=np.zeros_like(texels[..., :3]), where=alpha > 0), alpha],
            axis=2,
        )
    save_image(path, texels)
    sidecar_path(path).write_text(json.dumps({"param": m.param.value}), encoding="utf-8")
    logger.debug(f"Saved {m!r} to {path}")


def load_envmap(path: PathLike, param: Optional[Parameterization] = None) -> EnvironmentMap:
    """
    Read a map written by save_envmap (or any supported image)

    The parameterization comes from the argument, else the sidecar, else
    LatLong when width = 2 x height and SphereMap otherwise.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Environment map not found: {path}")
    texels = load_image(path)
    # straight-alpha images hold unpremultiplied color
    if path.suffix.lower() in PNG_EXTS | PPM_EXTS:
        texels[..., :3] *= texels[..., 3:4]

    if param is None:
        side = sidecar_path(path)
        if side.exists():
            try:
                param = Parameterization.parse(json.loads(side.read_text(encoding="utf-8"))["param"])
            except (KeyError, json.JSONDecodeError) as e:
                raise ImageFormatError(f"{side}: bad sidecar: {e}")
        else:
            height, width = texels.shape[:2]
            param = Parameterization.LATLONG if width == 2 * height else Parameterization.SPHEREMAP
    return EnvironmentMap(texels, param)
