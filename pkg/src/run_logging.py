"""
Run Logging for EmbedMap
Console plus rotating file logs, a startup system report and performance lines
"""
from __future__ import annotations
import logging
import logging.handlers
from pathlib import Path
from typing import Optional

import psutil

from config import config_manager

PERF_LOGGER_NAME = "embedmap.performance"


class RunLogger:
    """Installs the EmbedMap handlers on the root logger"""

    def __init__(self, app_name: str = "EmbedMap", quiet: bool = False,
                 logs_dir: Optional[Path] = None, to_file: Optional[bool] = None):
        self.app_name = app_name
        self.quiet = quiet
        self.logs_dir = logs_dir or config_manager.get_logs_path()
        self.to_file = config_manager.config.app.log_to_file if to_file is None else to_file

        self._setup_logging()

    def _setup_logging(self):
        """Setup console and file handlers"""
        self.logger = logging.getLogger()
        self.logger.setLevel(logging.DEBUG)

        # Re-running setup (tests, bench) must not stack handlers
        for handler in list(self.logger.handlers):
            if getattr(handler, "_embedmap", False):
                self.logger.removeHandler(handler)
                handler.close()

        detailed_formatter = logging.Formatter(
            '%(asctime)s | %(levelname)-8s | %(name)s | %(funcName)s:%(lineno)d | %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        simple_formatter = logging.Formatter(
            '%(asctime)s | %(levelname)s | %(message)s',
            datefmt='%H:%M:%S'
        )

        level_name = config_manager.config.app.log_level.upper()
        console_level = logging.WARNING if self.quiet else getattr(logging, level_name, logging.INFO)

        console_handler = logging.StreamHandler()
        console_handler.setLevel(console_level)
        console_handler.setFormatter(simple_formatter)
        self._add(console_handler)

        if not self.to_file:
            return

        try:
            self.logs_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            self.logger.warning(f"Could not create logs directory {self.logs_dir}: {e}")
            return

        runtime_handler = logging.handlers.RotatingFileHandler(
            self.logs_dir / f"{self.app_name}_Runtime.log",
            maxBytes=10*1024*1024,  # 10MB
            backupCount=5,
            encoding='utf-8'
        )
        runtime_handler.setLevel(logging.INFO)
        runtime_handler.setFormatter(detailed_formatter)
        self._add(runtime_handler)

        error_handler = logging.FileHandler(
            self.logs_dir / f"{self.app_name}_Errors.log", mode='a', encoding='utf-8'
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(detailed_formatter)
        self._add(error_handler)

    def _add(self, handler: logging.Handler):
        handler._embedmap = True
        self.logger.addHandler(handler)

    def log_startup_info(self, workers: int):
        """Log system and configuration summary at debug/info level"""
        log = logging.getLogger(self.app_name)
        log.info(f"{self.app_name} {config_manager.config.app.version} starting")
        for key, value in config_manager.get_system_info().items():
            log.debug(f"  {key}: {value}")
        try:
            memory = psutil.virtual_memory()
            log.debug(f"  RAM: {memory.total / (1024**3):.1f} GB total, "
                      f"{memory.available / (1024**3):.1f} GB available")
            log.debug(f"  CPU Cores: {psutil.cpu_count(logical=False)} physical, "
                      f"{psutil.cpu_count(logical=True)} logical")
        except Exception as e:
            log.warning(f"Could not get system resources: {e}")
        log.debug(f"  Config Path: {config_manager.config_path}")
        log.info(f"  Workers: {workers}")


def setup_logging(quiet: bool = False, to_file: Optional[bool] = None,
                  logs_dir: Optional[Path] = None) -> RunLogger:
    return RunLogger(quiet=quiet, to_file=to_file, logs_dir=logs_dir)


def log_operation(operation: str, details: str = ""):
    """Log a user-visible operation"""
    logging.getLogger("embedmap").info(f"OPERATION | {operation} | {details}")


def log_error(message: str, error: Optional[Exception] = None):
    """Log error message, with traceback when an exception is given"""
    log = logging.getLogger("embedmap")
    if error:
        log.error(f"ERROR | {message} | {type(error).__name__}: {error}", exc_info=True)
    else:
        log.error(message)


def log_performance(operation: str, duration_ms: float, details: str = ""):
    """Log performance metrics"""
    logging.getLogger(PERF_LOGGER_NAME).debug(
        f"PERFORMANCE | {operation} | {duration_ms:.3f}ms | {details}"
    )
