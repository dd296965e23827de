"""
Configuration Management for EmbedMap
Handles the persistent user configuration, paths and system information
"""
from __future__ import annotations
import copy
import logging
import os
import platform
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Dict, Any, Optional, List, Literal

import psutil
import toml

from errors import ConfigError

logger = logging.getLogger(__name__)

# System Information
SYSTEM_INFO = {
    "os": platform.system(),
    "os_version": platform.version(),
    "architecture": platform.architecture()[0],
    "processor": platform.processor(),
    "python_version": platform.python_version(),
}

# Default Configuration
DEFAULT_CONFIG = {
    "app": {
        "name": "EmbedMap",
        "version": "1.0.0",
        "log_level": "INFO",
        "log_to_file": True,
    },
    "paths": {
        "logs_dir": "logs",
        "output_dir": "out",
    },
    "matting": {
        "mode": "alpha",  # alpha, clean-plate, none
        "key_t0": 0.02,
        "key_t1": 0.10,
    },
    "envmap": {
        "param": "latlong",  # latlong, spheremap
        "width": 512,
        "height": 256,
    },
    "render": {
        "f0": 0.04,
        "base_color": [0.0, 0.0, 0.0],
        "background": [0.0, 0.0, 0.0],
    },
    "pipeline": {
        "workers": 0,  # 0 = machine parallelism
        "band_rows": 16,  # fixed so outputs do not depend on the worker count
    },
}

MATTING_MODES = ("alpha", "clean-plate", "none")
PARAM_NAMES = ("latlong", "spheremap")


@dataclass
class AppConfig:
    name: str
    version: str
    log_level: str
    log_to_file: bool = True


@dataclass
class PathsConfig:
    logs_dir: str = "logs"
    output_dir: str = "out"


@dataclass
class MattingConfig:
    mode: Literal["alpha", "clean-plate", "none"]
    key_t0: float
    key_t1: float


@dataclass
class EnvmapConfig:
    param: Literal["latlong", "spheremap"]
    width: int
    height: int


@dataclass
class RenderConfig:
    f0: float
    base_color: List[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    background: List[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])


@dataclass
class PipelineSettings:
    workers: int
    band_rows: int


@dataclass
class Config:
    app: AppConfig
    paths: PathsConfig
    matting: MattingConfig
    envmap: EnvmapConfig
    render: RenderConfig
    pipeline: PipelineSettings


def parse_size(text: str) -> tuple:
    """Parse a 'WIDTHxHEIGHT' string into an (int, int) tuple"""
    try:
        w, h = text.lower().split("x")
        width, height = int(w), int(h)
    except (ValueError, AttributeError):
        raise ConfigError(f"Invalid size '{text}', expected WIDTHxHEIGHT")
    if width < 1 or height < 1:
        raise ConfigError(f"Invalid size '{text}', dimensions must be >= 1")
    return width, height


def machine_parallelism() -> int:
    """Logical CPU count, at least 1"""
    return max(1, psutil.cpu_count(logical=True) or 1)


class ConfigManager:
    """Configuration manager backed by a TOML file merged over DEFAULT_CONFIG"""

    def __init__(self, config_path: Optional[Path] = None):
        self.config_path = config_path or self._get_default_config_path()
        self.config = self._load_config()

    def _get_default_config_path(self) -> Path:
        """Get default configuration path based on OS"""
        override = os.environ.get("EMBEDMAP_CONFIG")
        if override:
            return Path(override)
        if SYSTEM_INFO["os"] == "Windows":
            base_path = Path(os.environ.get("LOCALAPPDATA", Path.home() / "AppData" / "Local"))
        else:
            base_path = Path.home() / ".config"
        return base_path / "EmbedMap" / "config.toml"

    def _load_config(self) -> Config:
        """Load configuration from file or create default"""
        if self.config_path.exists():
            try:
                config_data = toml.load(self.config_path)
                return self._merge_config(config_data)
            except (toml.TomlDecodeError, OSError, TypeError, ConfigError) as e:
                logger.warning(f"Error loading config {self.config_path}: {e}, using defaults")

        return self._create_config_from_dict(copy.deepcopy(DEFAULT_CONFIG))

    def _merge_config(self, config_data: Dict[str, Any]) -> Config:
        """Merge loaded config with defaults"""
        merged = copy.deepcopy(DEFAULT_CONFIG)

        for section, values in config_data.items():
            if section in merged and isinstance(values, dict):
                merged[section].update(values)
            else:
                logger.warning(f"Ignoring unknown config section: {section}")

        return self._create_config_from_dict(merged)

    def _create_config_from_dict(self, config_dict: Dict[str, Any]) -> Config:
        """Create Config object from dictionary"""
        config = Config(
            app=AppConfig(**config_dict["app"]),
            paths=PathsConfig(**config_dict["paths"]),
            matting=MattingConfig(**config_dict["matting"]),
            envmap=EnvmapConfig(**config_dict["envmap"]),
            render=RenderConfig(**config_dict["render"]),
            pipeline=PipelineSettings(**config_dict["pipeline"]),
        )
        self._validate(config)
        return config

    @staticmethod
    def _validate(config: Config):
        if config.matting.mode not in MATTING_MODES:
            raise ConfigError(f"Unknown matting mode: {config.matting.mode}")
        if not 0 <= config.matting.key_t0 < config.matting.key_t1:
            raise ConfigError("Matting thresholds must satisfy 0 <= key_t0 < key_t1")
        if config.envmap.param not in PARAM_NAMES:
            raise ConfigError(f"Unknown parameterization: {config.envmap.param}")
        if config.pipeline.workers < 0 or config.pipeline.band_rows < 1:
            raise ConfigError("pipeline.workers must be >= 0 and pipeline.band_rows >= 1")

    def save_config(self):
        """Save current configuration to file"""
        try:
            self.config_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.config_path, "w", encoding="utf-8") as f:
                toml.dump(asdict(self.config), f)
        except OSError as e:
            logger.error(f"Error saving config: {e}")

    def get_logs_path(self) -> Path:
        """Get logs directory path"""
        return Path(self.config.paths.logs_dir).resolve()

    def get_system_info(self) -> Dict[str, str]:
        """Get system information"""
        return SYSTEM_INFO.copy()

    def get_worker_count(self, requested: Optional[int] = None) -> int:
        """Resolve a worker count; None or 0 falls back to config, then machine parallelism"""
        workers = requested or self.config.pipeline.workers
        return workers if workers and workers > 0 else machine_parallelism()


# Global configuration manager
config_manager = ConfigManager()
