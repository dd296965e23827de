"""
Matte extraction for EmbedMap
Clean-plate difference keying with a two-threshold soft ramp, plus the
alpha-channel bypass and a full-coverage mode
"""
from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import ValidationError

logger = logging.getLogger(__name__)

DEFAULT_T0 = 0.02
DEFAULT_T1 = 0.10


@dataclass(frozen=True, eq=False)
class MatteFrame:
    """RGBA frame whose alpha is foreground coverage"""
    pixels: np.ndarray
    premultiplied: bool = True

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float32)
        if pixels.ndim != 3 or pixels.shape[2] != 4:
            raise ValidationError(f"Matte pixels must have shape (H, W, 4), got {pixels.shape}")
        alpha = pixels[..., 3]
        if np.any(alpha < 0.0) or np.any(alpha > 1.0):
            raise ValidationError("Matte alpha must lie in [0, 1]")
        object.__setattr__(self, "pixels", pixels)

    @property
    def alpha(self) -> np.ndarray:
        return self.pixels[..., 3]


def _check_frame(frame: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(frame, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] not in (3, 4):
        raise ValidationError(f"{name} must have shape (H, W, 3|4), got {arr.shape}")
    return arr


def extract_matte(frame: np.ndarray, clean_plate: np.ndarray,
                  t0: float = DEFAULT_T0, t1: float = DEFAULT_T1) -> MatteFrame:
    """
    Difference key a frame against a background-only clean plate

    Per pixel, dist is the largest absolute RGB difference from the plate;
    alpha is 0 up to t0, 1 from t1, and linear in between. The result is
    premultiplied.

    Raises:
        ValidationError: size mismatch or t0 >= t1
    """
    frame = _check_frame(frame, "frame")
    clean_plate = _check_frame(clean_plate, "clean plate")
    if frame.shape[:2] != clean_plate.shape[:2]:
        raise ValidationError(
            f"Frame {frame.shape[:2]} and clean plate {clean_plate.shape[:2]} differ in size"
        )
    if not 0.0 <= t0 < t1:
        raise ValidationError(f"Key thresholds must satisfy 0 <= t0 < t1, got {t0}, {t1}")

    rgb = frame[..., :3].astype(np.float64)
    dist = np.max(np.abs(rgb - clean_plate[..., :3].astype(np.float64)), axis=-1)
    alpha = np.clip((dist - t0) / (t1 - t0), 0.0, 1.0)

    out = np.empty(frame.shape[:2] + (4,), dtype=np.float32)
    out[..., :3] = rgb * alpha[..., None]
    out[..., 3] = alpha
    logger.debug(f"Keyed frame {frame.shape[1]}x{frame.shape[0]}: coverage {alpha.mean():.3f}")
    return MatteFrame(out, premultiplied=True)


def alpha_matte(frame: np.ndarray) -> MatteFrame:
    """Take coverage from the frame's own (straight) alpha channel"""
    frame = _check_frame(frame, "frame")
    if frame.shape[2] == 3:
        alpha = np.ones(frame.shape[:2], dtype=np.float64)
    else:
        alpha = np.clip(frame[..., 3].astype(np.float64), 0.0, 1.0)
    out = np.empty(frame.shape[:2] + (4,), dtype=np.float32)
    out[..., :3] = frame[..., :3].astype(np.float64) * alpha[..., None]
    out[..., 3] = alpha
    return MatteFrame(out, premultiplied=True)


def full_matte(frame: np.ndarray) -> MatteFrame:
    """Whole frame is foreground"""
    frame = _check_frame(frame, "frame")
    out = np.ones(frame.shape[:2] + (4,), dtype=np.float32)
    out[..., :3] = frame[..., :3]
    return MatteFrame(out, premultiplied=True)


def make_matte(frame: np.ndarray, mode: str, clean_plate: Optional[np.ndarray] = None,
               t0: float = DEFAULT_T0, t1: float = DEFAULT_T1) -> MatteFrame:
    """Dispatch on the matting mode name ("alpha", "clean-plate", "none")"""
    if mode == "alpha":
        return alpha_matte(frame)
    if mode == "clean-plate":
        if clean_plate is None:
            raise ValidationError("clean-plate matting needs a clean plate")
        return extract_matte(frame, clean_plate, t0, t1)
    if mode == "none":
        return full_matte(frame)
    raise ValidationError(f"Unknown matting mode: {mode}")
