"""
Frame Pipeline for EmbedMap
Per-frame ingest -> matte -> warp -> merge -> composite -> render loop with
per-stage timing, metrics reporting and the benchmark runner
"""
from __future__ import annotations
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import toml

from camera import CameraView, RigCamera, load_rig
from config import MATTING_MODES, config_manager
from envmap import EnvironmentMap
from errors import ConfigError, EmbedMapError, FrameError, ValidationError
from image_io import load_envmap, load_image, save_envmap, save_image
from matte import make_matte
from render import RenderOutput, Scene, load_scene, render_reflection
from run_logging import log_performance
from warp import MapSpec, RigCapture, WarpedLayer, composite_over, merge_views, warp_view_to_envmap
from workers import DEFAULT_BAND_ROWS

logger = logging.getLogger(__name__)

STAGES = ("matte", "warp", "merge", "composite", "render")

COMPOSITE_PATTERN = "composite_%05d.pfm"
RENDER_PATTERN = "render_%05d.png"
METRICS_FILE = "metrics.json"
MIN_WALL_TIME_S = 1e-9
BENCH_METRICS_FILE = "bench_metrics.json"


@dataclass
class PipelineConfig:
    """One pipeline run: shared rig, background map, scene and frame range"""
    rig: Path
    background: Path
    scene: Path
    first: int
    last: int
    map: MapSpec
    matting_mode: str = "alpha"
    key_t0: float = 0.02
    key_t1: float = 0.10
    output_dir: Path = Path("out")
    workers: int = 1
    band_rows: int = DEFAULT_BAND_ROWS

    def __post_init__(self):
        for name in ("rig", "background", "scene"):
            if not str(getattr(self, name) or ""):
                raise ConfigError(f"Pipeline config: '{name}' path is empty")
        if self.first > self.last:
            raise ConfigError(f"Frame range is empty: [{self.first}, {self.last}]")
        if self.matting_mode not in MATTING_MODES:
            raise ConfigError(f"Unknown matting mode: {self.matting_mode}")
        if not 0.0 <= self.key_t0 < self.key_t1:
            raise ConfigError("Matting thresholds must satisfy 0 <= key_t0 < key_t1")
        if self.workers < 1 or self.band_rows < 1:
            raise ConfigError("workers and band_rows must be >= 1")

    @property
    def frame_indices(self) -> range:
        return range(self.first, self.last + 1)

    @classmethod
    def from_dict(cls, doc: Dict[str, Any], base_dir: Optional[Path] = None,
                  workers: Optional[int] = None) -> "PipelineConfig":
        """
        Build a config from its JSON/TOML document

        Relative paths resolve against base_dir. Missing matting and map
        settings fall back to the user configuration.

        Raises:
            ConfigError: missing keys or invalid values
        """
        defaults = config_manager.config
        base_dir = base_dir or Path.cwd()

        def resolve(value: Any) -> Path:
            path = Path(str(value))
            return path if path.is_absolute() else base_dir / path

        try:
            frames = doc.get("frames", [0, 0])
            if isinstance(frames, int):
                frames = [frames, frames]
            first, last = int(frames[0]), int(frames[1])

            map_doc = doc.get("map", {})
            size = map_doc.get("size", f"{defaults.envmap.width}x{defaults.envmap.height}")
            map_spec = MapSpec.parse(size, map_doc.get("param", defaults.envmap.param))

            matting = doc.get("matting", {})
            return cls(
                rig=resolve(doc["rig"]),
                background=resolve(doc["background"]),
                scene=resolve(doc["scene"]),
                first=first,
                last=last,
                map=map_spec,
                matting_mode=str(matting.get("mode", defaults.matting.mode)),
                key_t0=float(matting.get("key_t0", defaults.matting.key_t0)),
                key_t1=float(matting.get("key_t1", defaults.matting.key_t1)),
                output_dir=resolve(doc.get("output_dir", defaults.paths.output_dir)),
                workers=config_manager.get_worker_count(workers or doc.get("workers")),
                band_rows=int(doc.get("band_rows", defaults.pipeline.band_rows)),
            )
        except KeyError as e:
            raise ConfigError(f"Pipeline config is missing {e}")
        except ConfigError:
            raise
        except (TypeError, ValueError, IndexError) as e:
            raise ConfigError(f"Invalid pipeline config: {e}")

    @classmethod
    def load(cls, path: Union[str, Path], workers: Optional[int] = None) -> "PipelineConfig":
        """Read a .json or .toml pipeline config"""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
            doc = toml.loads(text) if path.suffix.lower() == ".toml" else json.loads(text)
        except (OSError, json.JSONDecodeError, toml.TomlDecodeError) as e:
            raise ConfigError(f"Cannot read pipeline config {path}: {e}")
        if not isinstance(doc, dict):
            raise ConfigError(f"Pipeline config {path} must be an object")
        return cls.from_dict(doc, path.parent.resolve(), workers)


@dataclass
class FrameMetrics:
    """Wall times of one frame in milliseconds; timestamps in seconds from run start"""
    index: int
    matte_ms: float = 0.0
    warp_ms: float = 0.0
    merge_ms: float = 0.0
    composite_ms: float = 0.0
    render_ms: float = 0.0
    end_to_end_ms: float = 0.0
    started: float = 0.0
    finished: float = 0.0

    def stage_ms(self, stage: str) -> float:
        return getattr(self, f"{stage}_ms")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class MetricsReport:
    table: str
    data: Dict[str, Any]


@dataclass
class PipelineResult:
    metrics: List[FrameMetrics] = field(default_factory=list)
    errors: List[FrameError] = field(default_factory=list)
    outputs: List[Path] = field(default_factory=list)
    wall_time: float = 0.0
    report: Optional[MetricsReport] = None

    @property
    def exit_code(self) -> int:
        return 2 if self.errors else 0


class _StageTimer:
    """Accumulates wall time into a FrameMetrics field"""

    def __init__(self, metrics: FrameMetrics, stage: str):
        self.metrics = metrics
        self.stage = stage

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        elapsed = (time.perf_counter() - self.start) * 1000.0
        setattr(self.metrics, f"{self.stage}_ms", self.metrics.stage_ms(self.stage) + elapsed)
        return False


# ---------------------------------------------------------------------------
# Stages shared by the pipeline and the individual CLI commands

def load_clean_plates(cameras: Sequence[RigCamera]) -> List[np.ndarray]:
    """
    Read every camera's clean plate

    Raises:
        ConfigError: a camera has no clean plate or it cannot be read
    """
    plates = []
    for k, cam in enumerate(cameras):
        if not cam.clean_plate:
            raise ConfigError(f"Camera {k} has no clean_plate for clean-plate matting")
        try:
            plates.append(load_image(cam.clean_plate))
        except (OSError, EmbedMapError) as e:
            raise ConfigError(f"Cannot read clean plate of camera {k}: {e}")
    return plates


def read_frames(cameras: Sequence[RigCamera], frame_index: int) -> List[np.ndarray]:
    """
    Ingest one frame of every camera

    Raises:
        FrameError: missing or unreadable frame file, wrong frame size or
            non-finite pixels
    """
    frames = []
    for k, cam in enumerate(cameras):
        path = cam.frame_path(frame_index)
        if not path.exists():
            raise FrameError(frame_index, f"camera {k}: missing {path}")
        try:
            frame = load_image(path)
        except (OSError, EmbedMapError) as e:
            raise FrameError(frame_index, f"camera {k}: {e}")
        expected = (cam.intrinsics.height, cam.intrinsics.width)
        if frame.shape[:2] != expected:
            raise FrameError(frame_index, f"camera {k}: frame size {frame.shape[:2]} != {expected}")
        if not np.all(np.isfinite(frame)):
            raise FrameError(frame_index, f"camera {k}: frame contains non-finite pixels")
        frames.append(frame)
    return frames


def matte_capture(cameras: Sequence[RigCamera], frames: Sequence[np.ndarray], frame_index: int,
                  mode: str, plates: Optional[Sequence[np.ndarray]] = None,
                  t0: float = 0.02, t1: float = 0.10) -> RigCapture:
    """Matte every frame and bind the premultiplied results to their cameras"""
    views: List[CameraView] = []
    for k, (cam, frame) in enumerate(zip(cameras, frames)):
        plate = plates[k] if plates is not None else None
        matte = make_matte(frame, mode, plate, t0, t1)
        views.append(cam.view(matte.pixels))
    return RigCapture(views, frame_index)


def warp_capture(capture: RigCapture, spec: MapSpec, workers: int = 1,
                 band_rows: int = DEFAULT_BAND_ROWS) -> List[WarpedLayer]:
    return [warp_view_to_envmap(view, spec, 1.0, workers, band_rows) for view in capture.views]


# ---------------------------------------------------------------------------
# Pipeline

class FramePipeline:
    """
    Sequential frame loop over read-only shared state (rig, clean plates,
    background map, scene). Each stage may fan out over row bands and joins
    before the next one starts.
    """

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.cameras = load_rig(cfg.rig)
        self.scene: Scene = load_scene(cfg.scene)
        try:
            self.background: EnvironmentMap = load_envmap(cfg.background)
        except (OSError, EmbedMapError) as e:
            raise ConfigError(f"Cannot read background map {cfg.background}: {e}")
        if (self.background.width, self.background.height, self.background.param) != \
                (cfg.map.width, cfg.map.height, cfg.map.param):
            raise ConfigError(
                f"Background {self.background!r} does not match the map "
                f"{cfg.map.width}x{cfg.map.height} {cfg.map.param.value}"
            )
        self.plates = load_clean_plates(self.cameras) if cfg.matting_mode == "clean-plate" else None

    def process_frame(self, frame_index: int, run_start: float) -> Tuple[FrameMetrics, EnvironmentMap, RenderOutput]:
        """One frame in, one composite map and one render out"""
        cfg = self.cfg
        metrics = FrameMetrics(index=frame_index, started=time.perf_counter() - run_start)
        start = time.perf_counter()

        frames = read_frames(self.cameras, frame_index)
        with _StageTimer(metrics, "matte"):
            capture = matte_capture(self.cameras, frames, frame_index, cfg.matting_mode,
                                    self.plates, cfg.key_t0, cfg.key_t1)
        with _StageTimer(metrics, "warp"):
            layers = warp_capture(capture, cfg.map, cfg.workers, cfg.band_rows)
        with _StageTimer(metrics, "merge"):
            user = merge_views(layers)
        with _StageTimer(metrics, "composite"):
            composite = composite_over(user, self.background)
        with _StageTimer(metrics, "render"):
            rendered = render_reflection(self.scene, composite, cfg.workers, cfg.band_rows)

        metrics.end_to_end_ms = (time.perf_counter() - start) * 1000.0
        metrics.finished = time.perf_counter() - run_start
        return metrics, composite, rendered

    def run(self) -> PipelineResult:
        cfg = self.cfg
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        result = PipelineResult()
        logger.info(f"Pipeline: frames {cfg.first}..{cfg.last}, {len(self.cameras)} camera(s), "
                    f"{cfg.map.width}x{cfg.map.height} {cfg.map.param.value}, {cfg.workers} worker(s)")

        run_start = time.perf_counter()
        for index in cfg.frame_indices:
            try:
                metrics, composite, rendered = self.process_frame(index, run_start)
            except FrameError as e:
                logger.warning(f"Skipping {e}")
                result.errors.append(e)
                continue
            composite_path = cfg.output_dir / (COMPOSITE_PATTERN % index)
            render_path = cfg.output_dir / (RENDER_PATTERN % index)
            save_envmap(composite, composite_path)
            save_image(render_path, rendered.image)
            result.outputs.extend([composite_path, render_path])
            result.metrics.append(metrics)
            log_performance("frame", metrics.end_to_end_ms, f"index={index}")
        result.wall_time = time.perf_counter() - run_start

        if result.metrics:
            result.report = report_metrics(result.metrics, result.wall_time)
            write_metrics(cfg.output_dir / METRICS_FILE, result.report)
        else:
            logger.error("No frame was processed")
            result.report = MetricsReport(table="0 frame(s) processed", data={"frames": [], "fps": 0.0})
            write_metrics(cfg.output_dir / METRICS_FILE, result.report)
        logger.info(f"Pipeline finished: {len(result.metrics)} processed, {len(result.errors)} skipped "
                    f"in {result.wall_time:.2f}s")
        return result


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """
    Process every frame of cfg and write composite_%05d.pfm, render_%05d.png
    and metrics.json to cfg.output_dir

    Frames that fail to ingest are recorded in result.errors and skipped.

    Raises:
        ConfigError: rig, scene or background cannot be loaded
    """
    return FramePipeline(cfg).run()


# ---------------------------------------------------------------------------
# Metrics

def _stage_summary(metrics: Sequence[FrameMetrics]) -> Dict[str, Dict[str, float]]:
    summary = {}
    for stage in STAGES + ("end_to_end",):
        values = np.array([m.stage_ms(stage) for m in metrics], dtype=np.float64)
        summary[stage] = {"mean": float(values.mean()), "p95": float(np.percentile(values, 95))}
    return summary


def report_metrics(metrics: Sequence[FrameMetrics], wall_time: Optional[float] = None) -> MetricsReport:
    """
    Per-stage mean/p95 table plus the {"frames": [...], "fps": x} document

    fps is frames / wall_time; without wall_time it is measured from the
    first frame's start to the last frame's finish timestamp.

    Raises:
        ValidationError: empty metrics list
    """
    if not metrics:
        raise ValidationError("report_metrics needs at least one frame")
    if wall_time is None:
        wall_time = max(m.finished for m in metrics) - min(m.started for m in metrics)
    if wall_time <= 0.0:
        wall_time = sum(m.end_to_end_ms for m in metrics) / 1000.0
    # keeps fps finite when the timer resolution rounds wall_time to 0
    wall_time = max(wall_time, MIN_WALL_TIME_S)
    fps = len(metrics) / wall_time

    summary = _stage_summary(metrics)
    lines = [f"{'stage':<12}{'mean ms':>12}{'p95 ms':>12}", "-" * 36]
    for stage, stats in summary.items():
        lines.append(f"{stage:<12}{stats['mean']:>12.3f}{stats['p95']:>12.3f}")
    lines.append("-" * 36)
    lines.append(f"{len(metrics)} frame(s) in {wall_time:.3f}s: {fps:.2f} fps")

    data = {
        "frames": [m.to_dict() for m in metrics],
        "fps": fps,
        "wall_time_s": wall_time,
        "stages": summary,
    }
    return MetricsReport(table="\n".join(lines), data=data)


def write_metrics(path: Path, report: MetricsReport):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.data, indent=2), encoding="utf-8")
    logger.debug(f"Metrics written to {path}")


def run_bench(cfg: PipelineConfig, repeat: int = 3) -> Tuple[PipelineResult, MetricsReport]:
    """
    Run the pipeline repeat times and report the pooled frames

    Writes bench_metrics.json next to the pipeline outputs.

    Raises:
        ValidationError: repeat < 1 or no frame processed in any run
    """
    if repeat < 1:
        raise ValidationError(f"repeat must be >= 1, got {repeat}")
    pipeline = FramePipeline(cfg)
    pooled: List[FrameMetrics] = []
    wall_time = 0.0
    last = PipelineResult()
    for k in range(repeat):
        last = pipeline.run()
        pooled.extend(last.metrics)
        wall_time += last.wall_time
        logger.info(f"Bench run {k + 1}/{repeat}: {len(last.metrics)} frame(s) in {last.wall_time:.3f}s")
    report = report_metrics(pooled, wall_time)
    report.data["repeat"] = repeat
    write_metrics(cfg.output_dir / BENCH_METRICS_FILE, report)
    return last, report
