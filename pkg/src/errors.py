"""
Exception hierarchy for EmbedMap
All library errors derive from EmbedMapError so callers can catch one type
"""
from __future__ import annotations


class EmbedMapError(Exception):
    """Base class for all EmbedMap errors"""


class ValidationError(EmbedMapError, ValueError):
    """Invalid input or a violated type invariant"""


class SingularityError(ValidationError):
    """Direction has no texel under the requested parameterization"""


class DomainError(ValidationError):
    """Texture coordinate lies outside the parameterization's domain"""


class BehindCameraError(ValidationError):
    """Point lies at or behind the camera plane"""


class ConfigError(EmbedMapError):
    """Configuration could not be parsed or is inconsistent"""


class FrameError(EmbedMapError):
    """A single frame could not be ingested"""

    def __init__(self, frame_index: int, message: str):
        super().__init__(f"frame {frame_index}: {message}")
        self.frame_index = frame_index


class ImageFormatError(EmbedMapError):
    """Malformed or unsupported image file"""
