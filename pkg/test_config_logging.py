"""
User configuration, run logging and the row-band worker helpers
"""
import logging

import numpy as np
import pytest

from config import ConfigManager, parse_size
from errors import ConfigError
from run_logging import PERF_LOGGER_NAME, log_error, log_operation, log_performance, setup_logging
from workers import map_bands, row_bands, stack_bands


class TestParseSize:

    def test_valid(self):
        assert parse_size("512x256") == (512, 256)
        assert parse_size("64X32") == (64, 32)

    @pytest.mark.parametrize("text", ["512", "axb", "0x10", "10x-2", ""])
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            parse_size(text)


class TestConfigManager:

    def test_defaults_when_file_missing(self, tmp_path):
        manager = ConfigManager(tmp_path / "none.toml")
        assert manager.config.matting.mode == "alpha"
        assert manager.config.pipeline.band_rows == 16

    def test_file_overrides_defaults(self, tmp_path):
        path = tmp_path / "config.toml"
        path.write_text('[envmap]\nwidth = 256\nheight = 128\n[pipeline]\nworkers = 3\n')
        manager = ConfigManager(path)
        assert (manager.config.envmap.width, manager.config.envmap.height) == (256, 128)
        assert manager.config.envmap.param == "latlong"
        assert manager.get_worker_count() == 3
        assert manager.get_worker_count(5) == 5

    def test_invalid_file_falls_back_to_defaults(self, tmp_path):
        path = tmp_path / "config.toml"
        path.write_text('[matting]\nmode = "chroma"\n')
        assert ConfigManager(path).config.matting.mode == "alpha"

    def test_unparseable_file_falls_back_to_defaults(self, tmp_path):
        path = tmp_path / "config.toml"
        path.write_text("[envmap\nwidth = ")
        assert ConfigManager(path).config.envmap.width == 512

    def test_save_round_trip(self, tmp_path):
        manager = ConfigManager(tmp_path / "sub" / "config.toml")
        manager.config.render.f0 = 0.5
        manager.save_config()
        assert ConfigManager(tmp_path / "sub" / "config.toml").config.render.f0 == 0.5

    def test_zero_workers_means_machine_parallelism(self, tmp_path):
        manager = ConfigManager(tmp_path / "none.toml")
        assert manager.get_worker_count(0) >= 1


class TestRunLogging:

    def handlers(self):
        return [h for h in logging.getLogger().handlers if getattr(h, "_embedmap", False)]

    def test_console_only(self):
        setup_logging(to_file=False)
        assert len(self.handlers()) == 1

    def test_files_written(self, tmp_path):
        run_logger = setup_logging(quiet=True, to_file=True, logs_dir=tmp_path)
        try:
            assert len(self.handlers()) == 3
            assert self.handlers()[0].level == logging.WARNING
            log_operation("test", "details")
            log_error("something broke", ValueError("bad"))
            run_logger.log_startup_info(2)
            for handler in self.handlers():
                handler.flush()
            runtime = (tmp_path / "EmbedMap_Runtime.log").read_text()
            errors = (tmp_path / "EmbedMap_Errors.log").read_text()
            assert "OPERATION | test | details" in runtime
            assert "something broke" in errors and "ValueError" in errors
            assert "Workers: 2" in runtime
        finally:
            setup_logging(to_file=False)

    def test_setup_does_not_stack_handlers(self):
        setup_logging(to_file=False)
        setup_logging(to_file=False)
        assert len(self.handlers()) == 1

    def test_performance_lines(self, caplog):
        with caplog.at_level(logging.DEBUG, logger=PERF_LOGGER_NAME):
            log_performance("frame", 12.5, "index=3")
        assert "PERFORMANCE | frame | 12.500ms | index=3" in caplog.text


class TestRowBands:

    def test_bands_cover_rows(self):
        bands = row_bands(37, 16)
        assert [(b.start, b.stop) for b in bands] == [(0, 16), (16, 32), (32, 37)]

    def test_results_in_band_order(self):
        starts = map_bands(lambda rows: rows.start, 100, workers=4, band_rows=7)
        assert starts == list(range(0, 100, 7))

    def test_stack_matches_serial(self):
        def block(rows):
            return np.arange(rows.start, rows.stop)[:, None] * np.ones((1, 3))

        serial = stack_bands(block, 50, workers=1, band_rows=16)
        threaded = stack_bands(block, 50, workers=8, band_rows=16)
        assert np.array_equal(serial, threaded)
        assert serial.shape == (50, 3)
