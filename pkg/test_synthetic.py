"""
Synthetic rig generator and its analytic environments
"""
import numpy as np
import pytest

from camera import load_rig, project_points
from envmap import Parameterization, texel_directions
from errors import ValidationError
from image_io import load_envmap, load_image
from synthetic import (BillboardSpec, SyntheticRigSpec, color_wheel_env, disc_light_env, environment,
                       generate_synthetic_rig, rig_cameras, synthetic_views)

LL = Parameterization.LATLONG


class TestEnvironments:

    def test_color_wheel_values(self):
        dirs = np.array([[0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        rgba = color_wheel_env()(dirs)
        c = 0.4 * np.cos(np.radians(30.0))
        assert rgba[0] == pytest.approx([0.9, 0.3, 0.3, 1.0])
        assert rgba[1] == pytest.approx([0.5, 0.5 + c, 0.5 - c, 1.0])
        assert rgba[2] == pytest.approx([0.5, 0.5, 0.5, 1.0])

    def test_disc_light_values(self):
        tilt = np.radians([10.0, 30.0])
        dirs = np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 0.0],
                         [0.0, np.cos(tilt[0]), np.sin(tilt[0])], [0.0, np.cos(tilt[1]), np.sin(tilt[1])]])
        rgba = disc_light_env()(dirs)
        assert rgba[0] == pytest.approx([1.0, 0.95, 0.8, 1.0])
        assert rgba[1] == pytest.approx([0.05, 0.05, 0.05, 1.0])
        assert rgba[2] == pytest.approx([1.0, 0.95, 0.8, 1.0])
        assert rgba[3] == pytest.approx([0.05, 0.05, 0.05, 1.0])

    def test_unknown_environment(self):
        with pytest.raises(ValidationError):
            environment("plasma")

    @pytest.mark.parametrize("name", ["color-wheel", "disc-light"])
    def test_ground_truth_matches_environment(self, tmp_path, name):
        spec = SyntheticRigSpec(camera_count=1, image_width=8, image_height=8, environment=name,
                                ground_truth_size=(64, 32))
        paths = generate_synthetic_rig(spec, tmp_path)
        truth = load_envmap(paths["ground_truth"])
        dirs, _ = texel_directions(64, 32, LL)
        expected = environment(name)(dirs.reshape(-1, 3)).reshape(32, 64, 4)
        assert truth.param is LL
        assert np.allclose(truth.texels, expected, atol=1e-6)


class TestSyntheticRig:

    def test_constant_environment_gives_constant_frames(self, tmp_path):
        color = (0.3, 0.6, 0.9)
        spec = SyntheticRigSpec(camera_count=1, image_width=16, image_height=12, environment="constant",
                                env_color=color, frame_count=2, frame_format="pfm")
        paths = generate_synthetic_rig(spec, tmp_path)
        (cam,) = load_rig(paths["rig"])
        for index in range(2):
            frame = load_image(cam.frame_path(index))
            assert frame.shape == (12, 16, 4)
            assert np.all(frame[..., :3] == np.float32(color))
            assert np.all(frame[..., 3] == 0.0)

    def test_cube_rig_covers_every_texel_direction(self):
        spec = SyntheticRigSpec(camera_count=6, fov_deg=90.0, image_width=32, image_height=32,
                                ground_truth_size=(128, 64))
        dirs, _ = texel_directions(128, 64, LL)
        covered = np.zeros(dirs.shape[:2], dtype=bool)
        tol = 1e-6
        for cam in rig_cameras(spec):
            x, y, depth = project_points(cam.view(), dirs)
            covered |= (depth > 0) & (x >= -tol) & (x <= 32 + tol) & (y >= -tol) & (y <= 32 + tol)
        assert np.all(covered)

    def test_narrow_billboard_seen_by_one_camera(self):
        user = BillboardSpec(start=(0.0, 0.0, -3.0), end=(0.0, 0.0, -3.0), radius=0.2)
        spec = SyntheticRigSpec(camera_count=6, fov_deg=30.0, image_width=32, image_height=32, user=user)
        cameras = rig_cameras(spec)
        in_frustum = []
        for cam in cameras:
            x, y, depth = project_points(cam.view(), np.array([0.0, 0.0, -3.0]))
            in_frustum.append(bool(depth > 0 and 0 <= x <= 32 and 0 <= y <= 32))
        seen = [bool(np.any(view.frame[..., 3] > 0)) for view in synthetic_views(spec, 0)]
        assert sum(seen) == 1
        assert seen == in_frustum

    def test_billboard_moves_between_frames(self):
        user = BillboardSpec(start=(-1.0, 0.0, -3.0), end=(1.0, 0.0, -3.0), radius=0.3)
        spec = SyntheticRigSpec(camera_count=1, fov_deg=90.0, image_width=64, image_height=64,
                                user=user, frame_count=3)
        centroids = []
        for index in spec.frame_indices:
            (view,) = synthetic_views(spec, index)
            centroids.append(np.nonzero(view.frame[..., 3] > 0)[1].mean())
        assert centroids[0] < centroids[1] < centroids[2]

    def test_generation_is_deterministic(self, tmp_path):
        spec = SyntheticRigSpec(camera_count=2, image_width=16, image_height=16, environment="color-wheel",
                                user=BillboardSpec(start=(0.0, 0.0, -3.0), end=(0.5, 0.0, -3.0)),
                                frame_count=2, ground_truth_size=(32, 16))
        a = generate_synthetic_rig(spec, tmp_path / "a")
        b = generate_synthetic_rig(spec, tmp_path / "b")
        for key in ("rig", "ground_truth", "scene", "pipeline"):
            assert a[key].read_bytes() == b[key].read_bytes()
        for name in ("cam0/frame_00000.png", "cam1/frame_00001.png", "cam0/clean_plate.png"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    @pytest.mark.parametrize("kwargs", [
        {"camera_count": 0},
        {"fov_deg": 180.0},
        {"fov_deg": 0.0},
        {"environment": "plasma"},
        {"frame_format": "jpg"},
        {"frame_count": 0},
    ])
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ValidationError):
            SyntheticRigSpec(**kwargs)
