"""
PFM / PNG / PPM files and environment-map sidecars
"""
import json

import numpy as np
import pytest

from envmap import EnvironmentMap, Parameterization
from errors import ImageFormatError
from image_io import (alpha_path, decode_srgb, encode_srgb, load_envmap, load_image, read_pfm, save_envmap,
                      save_image, sidecar_path, write_pfm)

LL = Parameterization.LATLONG
SM = Parameterization.SPHEREMAP


def random_map(rng, width=32, height=16, param=LL):
    texels = np.empty((height, width, 4), dtype=np.float32)
    texels[..., 3] = rng.uniform(0.0, 1.0, size=(height, width))
    texels[..., :3] = rng.uniform(0.0, 1.0, size=(height, width, 3)) * texels[..., 3:4]
    return EnvironmentMap(texels, param)


class TestPFM:

    def test_rgb_is_bit_exact(self, tmp_path, rng):
        data = rng.uniform(0.0, 10.0, size=(7, 5, 3)).astype(np.float32)
        write_pfm(tmp_path / "a.pfm", data)
        assert np.array_equal(read_pfm(tmp_path / "a.pfm"), data)

    def test_greyscale(self, tmp_path, rng):
        data = rng.uniform(0.0, 1.0, size=(4, 6)).astype(np.float32)
        write_pfm(tmp_path / "g.pfm", data)
        assert np.array_equal(read_pfm(tmp_path / "g.pfm"), data)

    def test_rows_stored_bottom_up(self, tmp_path):
        data = np.zeros((2, 1, 3), dtype=np.float32)
        data[0] = 1.0
        write_pfm(tmp_path / "r.pfm", data)
        raw = (tmp_path / "r.pfm").read_bytes()
        floats = np.frombuffer(raw[-24:], dtype="<f4")
        assert np.all(floats[:3] == 0.0) and np.all(floats[3:] == 1.0)

    def test_big_endian_file(self, tmp_path):
        data = np.arange(6, dtype=np.float32).reshape(1, 2, 3)
        (tmp_path / "be.pfm").write_bytes(b"PF\n2 1\n1.0\n" + data.astype(">f4").tobytes())
        assert np.array_equal(read_pfm(tmp_path / "be.pfm"), data)

    def test_bad_identifier(self, tmp_path):
        (tmp_path / "x.pfm").write_bytes(b"P6\n1 1\n-1.0\n\x00\x00\x00\x00")
        with pytest.raises(ImageFormatError):
            read_pfm(tmp_path / "x.pfm")

    def test_truncated_raster(self, tmp_path):
        (tmp_path / "t.pfm").write_bytes(b"PF\n4 4\n-1.0\n\x00\x00")
        with pytest.raises(ImageFormatError):
            read_pfm(tmp_path / "t.pfm")


class TestImages:

    def test_pfm_alpha_goes_to_sibling(self, tmp_path, rng):
        pixels = rng.uniform(0.0, 1.0, size=(4, 4, 4)).astype(np.float32)
        save_image(tmp_path / "f.pfm", pixels)
        assert alpha_path(tmp_path / "f.pfm").exists()
        assert np.array_equal(load_image(tmp_path / "f.pfm"), pixels)

    def test_pfm_without_alpha_is_opaque(self, tmp_path):
        save_image(tmp_path / "f.pfm", np.full((2, 2, 3), 0.5, dtype=np.float32))
        assert np.all(load_image(tmp_path / "f.pfm")[..., 3] == 1.0)

    def test_png_quantization(self, tmp_path, rng):
        pixels = rng.uniform(0.0, 1.0, size=(8, 8, 4)).astype(np.float32)
        save_image(tmp_path / "f.png", pixels)
        back = load_image(tmp_path / "f.png")
        np.testing.assert_allclose(back[..., 3], pixels[..., 3], atol=0.5 / 255 + 1e-6)
        # one 8-bit step in gamma space, measured in linear space
        step = decode_srgb(np.array([255], dtype=np.uint8)) - decode_srgb(np.array([254], dtype=np.uint8))
        np.testing.assert_allclose(back[..., :3], pixels[..., :3], atol=float(step[0]))

    def test_ppm_drops_alpha(self, tmp_path):
        pixels = np.full((3, 3, 4), 0.5, dtype=np.float32)
        save_image(tmp_path / "f.ppm", pixels)
        assert np.all(load_image(tmp_path / "f.ppm")[..., 3] == 1.0)

    def test_srgb_codes_round_trip(self):
        codes = np.arange(256, dtype=np.uint8)
        assert np.array_equal(encode_srgb(decode_srgb(codes)), codes)

    def test_unsupported_extension(self, tmp_path):
        with pytest.raises(ImageFormatError):
            save_image(tmp_path / "f.tiff", np.zeros((2, 2, 3)))
        with pytest.raises(ImageFormatError):
            load_image(tmp_path / "f.tiff")


class TestEnvironmentMapFiles:

    def test_pfm_is_exact_with_sidecar(self, tmp_path, rng):
        m = random_map(rng)
        save_envmap(m, tmp_path / "user.pfm")
        assert json.loads(sidecar_path(tmp_path / "user.pfm").read_text()) == {"param": "latlong"}
        back = load_envmap(tmp_path / "user.pfm")
        assert back.param is LL
        assert np.array_equal(back.texels, m.texels)

    def test_spheremap_param_from_sidecar(self, tmp_path):
        m = EnvironmentMap.constant(16, 16, SM, (0.5, 0.5, 0.5, 1.0))
        save_envmap(m, tmp_path / "sm.pfm")
        assert load_envmap(tmp_path / "sm.pfm").param is SM

    def test_param_inferred_from_aspect(self, tmp_path):
        save_image(tmp_path / "wide.pfm", np.full((8, 16, 4), 0.5, dtype=np.float32))
        assert load_envmap(tmp_path / "wide.pfm").param is LL
        disc = EnvironmentMap.constant(8, 8, SM, (0.5, 0.5, 0.5, 1.0))
        save_image(tmp_path / "square.pfm", disc.texels)
        assert load_envmap(tmp_path / "square.pfm").param is SM

    def test_png_keeps_premultiplied_meaning(self, tmp_path):
        m = EnvironmentMap.constant(8, 4, LL, (0.4, 0.2, 0.0, 0.5))
        save_envmap(m, tmp_path / "m.png")
        back = load_envmap(tmp_path / "m.png")
        np.testing.assert_allclose(back.texels[0, 0], (0.4, 0.2, 0.0, 0.5), atol=0.01)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_envmap(tmp_path / "nope.pfm")

    def test_bad_sidecar(self, tmp_path):
        save_envmap(EnvironmentMap.constant(8, 4, LL, (0, 0, 0, 1)), tmp_path / "m.pfm")
        sidecar_path(tmp_path / "m.pfm").write_text("{}")
        with pytest.raises(ImageFormatError):
            load_envmap(tmp_path / "m.pfm")
