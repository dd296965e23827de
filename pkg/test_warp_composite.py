"""
Warping views onto the sphere, merging layers and the over operator
"""
import numpy as np
import pytest

from camera import CameraIntrinsics, CameraPose, CameraView
from envmap import EnvironmentMap, Parameterization, texel_directions
from errors import ConfigError, ValidationError
from matte import full_matte
from synthetic import SyntheticRigSpec, ground_truth_map, pole_rows_mask, psnr, synthetic_views
from warp import (MapSpec, RigCapture, WarpedLayer, build_user_envmap, composite_over, merge_views,
                  warp_view_to_envmap)

LL = Parameterization.LATLONG
SPEC = MapSpec(256, 128, LL)


def constant_view(rgba, forward=(0.0, 0.0, -1.0), fov=90.0, size=64):
    frame = np.empty((size, size, 4), dtype=np.float32)
    frame[...] = rgba
    return CameraView(CameraIntrinsics.from_fov(fov, size, size), CameraPose.looking_at(forward), frame)


def random_premultiplied(rng, shape=(32, 64)):
    texels = np.empty(shape + (4,), dtype=np.float32)
    alpha = rng.uniform(0.0, 1.0, size=shape)
    texels[..., 3] = alpha
    texels[..., :3] = rng.uniform(0.0, 1.0, size=shape + (3,)) * alpha[..., None]
    return EnvironmentMap(texels, LL)


class TestMapSpec:

    def test_parse(self):
        spec = MapSpec.parse("512x256", "latlong")
        assert (spec.width, spec.height, spec.param) == (512, 256, LL)

    def test_bad_latlong_aspect(self):
        with pytest.raises(ValidationError):
            MapSpec(300, 200, LL)

    def test_bad_size_string(self):
        with pytest.raises(ConfigError):
            MapSpec.parse("512by256", "latlong")


class TestWarpView:

    def test_frustum_membership_matches_brute_force(self):
        layer = warp_view_to_envmap(constant_view((0.2, 0.4, 0.6, 1.0)), SPEC)
        dirs, _ = texel_directions(SPEC.width, SPEC.height, LL)
        depth = -dirs[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            extent = np.maximum(np.abs(dirs[..., 0]), np.abs(dirs[..., 1])) / depth
        inside = (depth > 0) & (extent <= 1.0)
        near_edge = np.abs(extent - 1.0) < 1e-6
        colored = layer.map.alpha > 0
        assert np.array_equal(colored[~near_edge], inside[~near_edge])
        assert np.all(layer.map.texels[colored] == np.float32([0.2, 0.4, 0.6, 1.0]))
        assert np.all(layer.map.texels[~colored] == 0.0)
        assert np.array_equal(layer.weight > 0, colored)

    def test_transparent_matte_gives_zero_weight(self):
        layer = warp_view_to_envmap(constant_view((0.5, 0.5, 0.5, 0.0)), SPEC)
        assert np.all(layer.weight == 0.0)
        assert np.all(layer.map.texels == 0.0)

    def test_zero_alpha_texels_are_transparent_black(self):
        base = constant_view((0.5, 0.5, 0.5, 0.0))
        frame = base.frame.copy()
        frame[:, :32] = (1.0, 0.0, 0.0, 1.0)
        layer = warp_view_to_envmap(base.with_frame(frame), SPEC)
        clear = layer.map.alpha == 0.0
        assert np.any(layer.map.alpha == 1.0)
        assert np.all(layer.map.texels[clear] == 0.0)
        assert np.all(layer.weight[clear] == 0.0)

    def test_camera_translation_is_ignored(self):
        view = constant_view((0.2, 0.4, 0.6, 1.0))
        moved = CameraView(view.intrinsics, CameraPose(view.pose.rotation, [3.0, -1.0, 2.0]), view.frame)
        a = warp_view_to_envmap(view, SPEC)
        b = warp_view_to_envmap(moved, SPEC)
        assert np.array_equal(a.map.texels, b.map.texels)

    def test_worker_count_does_not_change_result(self, rng):
        frame = rng.uniform(0.0, 1.0, size=(64, 64, 4)).astype(np.float32)
        view = constant_view((0, 0, 0, 1)).with_frame(full_matte(frame).pixels)
        a = warp_view_to_envmap(view, SPEC, workers=1)
        b = warp_view_to_envmap(view, SPEC, workers=4)
        assert np.array_equal(a.map.texels, b.map.texels)
        assert np.array_equal(a.weight, b.weight)

    def test_layer_weight_must_be_positive(self):
        with pytest.raises(ValidationError):
            warp_view_to_envmap(constant_view((1, 1, 1, 1)), SPEC, weight=0.0)

    def test_layer_weight_invariant(self):
        m = EnvironmentMap.constant(8, 4, LL, (0.5, 0.5, 0.5, 1.0))
        with pytest.raises(ValidationError):
            WarpedLayer(m, np.zeros((4, 8)))


class TestMergeViews:

    def test_single_layer_is_identity(self):
        layer = warp_view_to_envmap(constant_view((0.2, 0.4, 0.6, 1.0)), SPEC)
        assert np.array_equal(merge_views([layer]).texels, layer.map.texels)

    def test_overlap_of_equal_layers_unchanged(self):
        a = warp_view_to_envmap(constant_view((0.2, 0.4, 0.6, 1.0)), SPEC)
        b = warp_view_to_envmap(constant_view((0.2, 0.4, 0.6, 1.0), forward=(1.0, 0.0, -1.0)), SPEC)
        merged = merge_views([a, b])
        overlap = (a.weight > 0) & (b.weight > 0)
        assert overlap.any()
        np.testing.assert_allclose(merged.texels[overlap], a.map.texels[overlap], atol=1e-7)

    def test_overlap_of_different_layers_is_average(self):
        a = warp_view_to_envmap(constant_view((0.2, 0.0, 0.6, 1.0)), SPEC)
        b = warp_view_to_envmap(constant_view((0.6, 0.8, 0.0, 1.0), forward=(1.0, 0.0, -1.0)), SPEC)
        merged = merge_views([a, b])
        overlap = (a.weight > 0) & (b.weight > 0)
        np.testing.assert_allclose(merged.texels[overlap], np.tile([0.4, 0.4, 0.3, 1.0], (overlap.sum(), 1)),
                                   atol=1e-6)
        only_a = (a.weight > 0) & (b.weight == 0)
        np.testing.assert_allclose(merged.texels[only_a], a.map.texels[only_a], atol=1e-7)
        nothing = (a.weight == 0) & (b.weight == 0)
        assert np.all(merged.texels[nothing] == 0.0)

    def test_layer_weight_knob(self):
        a = warp_view_to_envmap(constant_view((1.0, 0.0, 0.0, 1.0)), SPEC, weight=3.0)
        b = warp_view_to_envmap(constant_view((0.0, 0.0, 1.0, 1.0)), SPEC, weight=1.0)
        merged = merge_views([a, b])
        covered = a.weight > 0
        np.testing.assert_allclose(merged.texels[covered][:, :3], np.tile([0.75, 0.0, 0.25], (covered.sum(), 1)),
                                   atol=1e-6)

    def test_empty_list(self):
        with pytest.raises(ValidationError):
            merge_views([])

    def test_layout_mismatch(self):
        a = warp_view_to_envmap(constant_view((1, 1, 1, 1)), SPEC)
        b = warp_view_to_envmap(constant_view((1, 1, 1, 1)), MapSpec(128, 64, LL))
        with pytest.raises(ValidationError):
            merge_views([a, b])

    def test_alpha_stays_in_range(self, rng):
        views = [constant_view((0.3, 0.3, 0.3, a), forward=f)
                 for a, f in [(0.4, (0, 0, -1)), (0.9, (1, 0, -1)), (1.0, (0, 1, -1))]]
        merged = merge_views([warp_view_to_envmap(v, SPEC) for v in views])
        assert np.all(np.isfinite(merged.texels))
        assert np.all((merged.alpha >= 0.0) & (merged.alpha <= 1.0))


class TestCompositeOver:

    def test_spot_value(self):
        user = EnvironmentMap.constant(8, 4, LL, (0.5, 0.0, 0.0, 0.5))
        bg = EnvironmentMap.constant(8, 4, LL, (0.0, 0.4, 0.0, 1.0))
        out = composite_over(user, bg)
        np.testing.assert_allclose(out.texels[0, 0], (0.5, 0.2, 0.0, 1.0), atol=1e-7)

    def test_transparent_user_is_identity(self, rng):
        for _ in range(100):
            bg = random_premultiplied(rng)
            clear = EnvironmentMap(np.zeros((32, 64, 4)), LL)
            assert np.array_equal(composite_over(clear, bg).texels, bg.texels)

    def test_opaque_user_absorbs_background(self, rng):
        for _ in range(100):
            texels = random_premultiplied(rng).texels.copy()
            texels[..., 3] = 1.0
            user = EnvironmentMap(texels, LL)
            assert np.array_equal(composite_over(user, random_premultiplied(rng)).texels, user.texels)

    def test_associativity(self, rng):
        for _ in range(100):
            a, b, c = (random_premultiplied(rng) for _ in range(3))
            left = composite_over(composite_over(a, b), c)
            right = composite_over(a, composite_over(b, c))
            np.testing.assert_allclose(left.texels, right.texels, atol=1e-6)

    def test_layout_mismatch(self):
        a = EnvironmentMap.constant(8, 4, LL, (0, 0, 0, 0))
        b = EnvironmentMap.constant(16, 8, LL, (0, 0, 0, 0))
        with pytest.raises(ValidationError):
            composite_over(a, b)


class TestReconstruction:

    def test_six_camera_gradient_rig_matches_ground_truth(self):
        spec = SyntheticRigSpec(camera_count=6, fov_deg=90.0, image_width=256, image_height=256,
                                environment="gradient", ground_truth_size=(256, 128))
        views = [v.with_frame(full_matte(v.frame).pixels) for v in synthetic_views(spec, 0)]
        user = build_user_envmap(RigCapture(views, 0), SPEC, workers=2)
        truth = ground_truth_map(spec)
        assert np.all(user.alpha == 1.0)
        assert psnr(user.texels, truth.texels, pole_rows_mask(128, 256)) >= 40.0

    def test_rig_capture_needs_views(self):
        with pytest.raises(ValidationError):
            RigCapture([], 0)

    def test_rig_capture_needs_frames(self):
        view = constant_view((1, 1, 1, 1))
        with pytest.raises(ValidationError):
            RigCapture([CameraView(view.intrinsics, view.pose)], 0)
