"""
Tests for Gaussian construction, rasterization and feature decoding.
"""
import unittest

import numpy as np
from scipy.spatial.transform import Rotation

from core.errors import InvalidArgumentError
from core.geometry import CameraModel
from core.imaging import DepthMap, ImageBuffer
from core.rig import default_rig
from core.scene import plane_scene, render_ground_truth
from core.splatting import (
    MAX_ALPHA,
    FeatureImage,
    GaussianCloud,
    SplatConfig,
    decode_features,
    encode_source,
    lift_to_gaussians,
    push_pull_fill,
    rasterize_gaussians,
    render_latent_view,
)


def _camera(width=24, height=20, focal=40.0):
    return CameraModel(fx=focal, fy=focal, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                       width=width, height=height)


def _random_cloud(count=60, dim=5, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.uniform(1.0, 2.0, count)
    positions = np.stack([rng.uniform(-0.25, 0.25, count) * z, rng.uniform(-0.2, 0.2, count) * z, z], axis=-1)
    return GaussianCloud(
        positions=positions,
        features=rng.uniform(0.0, 1.0, (count, dim)),
        scales=np.repeat(rng.uniform(0.005, 0.03, count)[:, None], 3, axis=1),
        opacities=rng.uniform(0.1, 1.0, count),
        ids=np.arange(count),
    )


def _random_camera(rng, width, height):
    focal = rng.uniform(30.0, 80.0)
    rotation = Rotation.from_rotvec(rng.normal(0.0, 0.1, 3)).as_matrix()
    return CameraModel(fx=focal, fy=focal, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                       width=width, height=height, rotation=rotation, translation=rng.normal(0.0, 0.05, 3))


def _random_scene(seed):
    """Seeded camera up to 64 x 64 and cloud of up to 1000 anisotropic splats, a few behind the camera."""
    rng = np.random.default_rng(seed)
    width, height = int(rng.integers(8, 65)), int(rng.integers(8, 65))
    camera = _random_camera(rng, width, height)
    count, dim = int(rng.integers(1, 1001)), int(rng.integers(3, 9))
    z = np.where(rng.uniform(size=count) < 0.05, -1.0, 1.0) * rng.uniform(1.0, 3.0, count)
    in_camera = np.stack([
        rng.uniform(-0.5, 0.5, count) * width / camera.fx * np.abs(z),
        rng.uniform(-0.5, 0.5, count) * height / camera.fy * np.abs(z),
        z,
    ], axis=-1)
    cloud = GaussianCloud(
        positions=(in_camera - camera.translation) @ camera.rotation,
        features=rng.uniform(-1.0, 1.0, (count, dim)),
        scales=rng.uniform(0.002, 0.03, (count, 3)),
        opacities=rng.uniform(0.05, 1.0, count),
        ids=rng.permutation(count),
    )
    return camera, cloud, int(rng.choice([4, 8, 16]))


def _oracle(cloud, camera):
    """Dense compositing of every splat at every pixel, straight from the raw cloud."""
    cam = cloud.positions @ camera.rotation.T + camera.translation
    front = cam[:, 2] > 1e-3
    cam, scales = cam[front], cloud.scales[front]
    features, opacities, ids = cloud.features[front], cloud.opacities[front], cloud.ids[front]
    order = np.lexsort((ids, cam[:, 2]))
    cam, scales, features, opacities = cam[order], scales[order], features[order], opacities[order]
    x, y, z = cam.T

    jacobian = np.zeros((len(z), 2, 3))
    jacobian[:, 0, 0] = camera.fx / z
    jacobian[:, 0, 2] = -camera.fx * x / z ** 2
    jacobian[:, 1, 1] = camera.fy / z
    jacobian[:, 1, 2] = -camera.fy * y / z ** 2
    world = np.einsum("ij,nj,kj->nik", camera.rotation, scales ** 2, camera.rotation)
    cov = np.einsum("nij,njk,nlk->nil", jacobian, world, jacobian) + 0.3 * np.eye(2)
    inverse = np.linalg.inv(cov)
    means = np.stack([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy], axis=-1)

    py, px = np.mgrid[0:camera.height, 0:camera.width].astype(np.float64)
    offsets = np.stack([px.ravel(), py.ravel()], axis=-1)[:, None, :] - means[None]
    q = np.einsum("pni,nij,pnj->pn", offsets, inverse, offsets)
    alpha = np.where(q <= 9.0, np.minimum(opacities * np.exp(-0.5 * q), 0.99), 0.0)
    passed = np.cumprod(1.0 - alpha, axis=1)
    passed = np.concatenate([np.ones((len(passed), 1)), passed[:, :-1]], axis=1)
    weights = alpha * passed
    shape = (camera.height, camera.width)
    return (weights @ features).reshape(shape + (features.shape[1],)), np.minimum(weights.sum(axis=1), 1.0).reshape(shape)


class TestGaussianCloud(unittest.TestCase):
    """Tests for GaussianCloud construction."""

    def test_explicit_empty_keeps_feature_width(self):
        for dim in (5, 0):
            with self.subTest(dim=dim):
                cloud = GaussianCloud(np.zeros((0, 3)), np.zeros((0, dim)), np.zeros((0, 3)), np.zeros(0), np.zeros(0))
                self.assertEqual(len(cloud), 0)
                self.assertEqual(cloud.feature_dim, dim)
                self.assertEqual(cloud.features.shape, (0, dim))

    def test_empty_constructor(self):
        self.assertEqual(GaussianCloud.empty(7).feature_dim, 7)

    def test_flat_features_reshaped_per_splat(self):
        cloud = GaussianCloud(np.zeros((2, 3)) + [0, 0, 1], np.arange(6.0), np.full((2, 3), 0.1), np.ones(2), np.arange(2))
        self.assertEqual(cloud.features.shape, (2, 3))

    def test_negative_scale_rejected(self):
        with self.assertRaises(InvalidArgumentError):
            GaussianCloud(np.zeros((1, 3)), np.ones((1, 3)), -np.ones((1, 3)), np.ones(1), np.zeros(1))


class TestSplatConfig(unittest.TestCase):
    """Tests for SplatConfig validation."""

    def test_feature_dim_holds_rgb(self):
        with self.assertRaises(InvalidArgumentError):
            SplatConfig(feature_dim=2)

    def test_resolution_factor_range(self):
        with self.assertRaises(InvalidArgumentError):
            SplatConfig(resolution_factor=0.0)
        with self.assertRaises(InvalidArgumentError):
            SplatConfig(resolution_factor=1.5)

    def test_kappa_positive(self):
        with self.assertRaises(InvalidArgumentError):
            SplatConfig(kappa=0.0)


class TestEncodeSource(unittest.TestCase):
    """Tests for encode_source."""

    def setUp(self):
        rng = np.random.default_rng(3)
        self.camera = _camera(width=16, height=12, focal=100.0)
        self.image = ImageBuffer(rng.uniform(0.0, 1.0, (12, 16, 3)))
        self.depth = DepthMap(np.full((12, 16), 2.0))
        self.mask = np.ones((12, 16), dtype=bool)

    def test_first_channels_are_rgb(self):
        out = encode_source(self.image, self.depth, self.mask, self.camera, SplatConfig(feature_dim=6))
        self.assertEqual(out.features.shape, (12, 16, 6))
        self.assertTrue(np.array_equal(out.features[:, :, :3], self.image.values))

    def test_scale_follows_depth_over_focal(self):
        out = encode_source(self.image, self.depth, self.mask, self.camera, SplatConfig(kappa=1.5))
        self.assertTrue(np.allclose(out.scales, 1.5 * 2.0 / 100.0))

    def test_background_opacity_zero(self):
        mask = self.mask.copy()
        mask[:, :4] = False
        out = encode_source(self.image, self.depth, mask, self.camera)
        self.assertTrue(np.all(out.opacity[:, :4] == 0.0))
        self.assertTrue(np.all(out.opacity[:, 8:] == 1.0))
        self.assertTrue(np.all((out.opacity >= 0) & (out.opacity <= 1)))

    def test_invalid_depth_opacity_zero(self):
        depth = DepthMap.from_array(self.depth.depth, np.arange(16)[None, :].repeat(12, 0) < 8)
        out = encode_source(self.image, depth, self.mask, self.camera)
        self.assertTrue(np.all(out.opacity[:, 8:] == 0.0))

    def test_size_mismatch(self):
        with self.assertRaises(InvalidArgumentError):
            encode_source(self.image, DepthMap(np.ones((4, 4))), self.mask, self.camera)


class TestLiftToGaussians(unittest.TestCase):
    """Tests for lift_to_gaussians."""

    def setUp(self):
        self.camera = _camera(width=8, height=6, focal=50.0)
        self.image = ImageBuffer(np.full((6, 8, 3), 0.5))
        valid = np.zeros((6, 8), dtype=bool)
        valid[1:4, 2:7] = True
        self.depth = DepthMap.from_array(np.full((6, 8), 1.5), valid)

    def test_one_gaussian_per_valid_pixel(self):
        out = encode_source(self.image, self.depth, np.ones((6, 8), dtype=bool), self.camera)
        cloud = lift_to_gaussians([out], [self.depth], [self.camera])
        self.assertEqual(len(cloud), 15)
        self.assertTrue(np.allclose(cloud.positions[:, 2], 1.5))

    def test_ids_offset_by_view(self):
        out = encode_source(self.image, self.depth, np.ones((6, 8), dtype=bool), self.camera)
        cloud = lift_to_gaussians([out, out], [self.depth, self.depth], [self.camera, self.camera])
        self.assertEqual(len(cloud), 30)
        self.assertEqual(len(np.unique(cloud.ids)), 30)
        self.assertTrue(np.all(cloud.ids[15:] >= 48))

    def test_empty_mask_gives_empty_cloud(self):
        out = encode_source(self.image, self.depth, np.zeros((6, 8), dtype=bool), self.camera)
        cloud = lift_to_gaussians([out], [self.depth], [self.camera])
        self.assertEqual(len(cloud), 0)
        self.assertEqual(cloud.feature_dim, out.features.shape[-1])


class TestRasterize(unittest.TestCase):
    """Tests for rasterize_gaussians."""

    def test_empty_cloud(self):
        fi = rasterize_gaussians(GaussianCloud.empty(4), _camera())
        self.assertEqual(fi.features.shape, (20, 24, 4))
        self.assertFalse(fi.features.any())
        self.assertFalse(fi.alpha.any())

    def test_front_gaussian_dominates(self):
        """Two coaxial splats: the center pixel is within 1.5% of the front feature."""
        camera = _camera(width=33, height=33, focal=100.0)
        cloud = GaussianCloud(
            positions=np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 1.0]]),
            features=np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]),
            scales=np.full((2, 3), 0.01),
            opacities=np.ones(2),
            ids=np.array([0, 1]),
        )
        fi = rasterize_gaussians(cloud, camera)
        self.assertTrue(np.allclose(fi.features[16, 16], [1.0, 0.0, 0.0], atol=0.015))
        self.assertAlmostEqual(fi.alpha[16, 16], 1.0 - (1.0 - MAX_ALPHA) ** 2)

    def test_matches_dense_compositing(self):
        """Fifty seeded scenes with rotated cameras agree with per-pixel dense compositing."""
        for seed in range(50):
            with self.subTest(seed=seed):
                camera, cloud, tile = _random_scene(seed)
                fi = rasterize_gaussians(cloud, camera, tile=tile)
                features, alpha = _oracle(cloud, camera)
                self.assertTrue(np.allclose(fi.features, features, rtol=0.0, atol=1e-5))
                self.assertTrue(np.allclose(fi.alpha, alpha, rtol=0.0, atol=1e-5))

    def test_output_is_convex_in_features(self):
        camera, cloud, _ = _random_scene(7)
        fi = rasterize_gaussians(cloud, camera)
        bound = np.abs(cloud.features).max(axis=0)
        self.assertTrue(np.all(np.abs(fi.features) <= bound + 1e-12))
        self.assertTrue(np.all((fi.alpha >= 0.0) & (fi.alpha <= 1.0)))

    def test_adding_splats_never_lowers_alpha(self):
        camera, cloud, _ = _random_scene(11)
        keep = np.random.default_rng(0).uniform(size=len(cloud)) < 0.5
        subset = GaussianCloud(cloud.positions[keep], cloud.features[keep], cloud.scales[keep],
                               cloud.opacities[keep], cloud.ids[keep])
        full = rasterize_gaussians(cloud, camera)
        partial = rasterize_gaussians(subset, camera)
        self.assertTrue(np.all(full.alpha >= partial.alpha - 1e-12))

    def test_color_only_features_match_wider_features(self):
        """With three channels the renderer is plain color splatting."""
        camera, cloud, _ = _random_scene(13)
        rng = np.random.default_rng(13)
        wide = GaussianCloud(cloud.positions, rng.uniform(0.0, 1.0, (len(cloud), 8)), cloud.scales,
                             cloud.opacities, cloud.ids)
        color = GaussianCloud(wide.positions, wide.features[:, :3], wide.scales, wide.opacities, wide.ids)
        fi_color = rasterize_gaussians(color, camera)
        fi_wide = rasterize_gaussians(wide, camera)
        self.assertTrue(np.array_equal(fi_color.features, fi_wide.features[:, :, :3]))

        decoded = decode_features(fi_color)
        covered = fi_color.alpha > 0.05
        self.assertTrue(covered.any())
        normalized = fi_color.features[covered] / fi_color.alpha[covered][:, None]
        self.assertTrue(np.allclose(decoded.image.values[covered], normalized, rtol=0.0, atol=1e-12))
        self.assertTrue(np.allclose(decoded.image.values, decode_features(fi_wide).image.values, rtol=0.0, atol=1e-5))

    def test_order_independent(self):
        cloud = _random_cloud(seed=4)
        order = np.random.default_rng(9).permutation(len(cloud))
        shuffled = GaussianCloud(cloud.positions[order], cloud.features[order], cloud.scales[order],
                                 cloud.opacities[order], cloud.ids[order])
        a = rasterize_gaussians(cloud, _camera())
        b = rasterize_gaussians(shuffled, _camera())
        self.assertTrue(np.array_equal(a.features, b.features))

    def test_threads_bit_identical(self):
        cloud = _random_cloud(seed=5)
        serial = rasterize_gaussians(cloud, _camera(), tile=8, workers=1)
        threaded = rasterize_gaussians(cloud, _camera(), tile=8, workers=4)
        self.assertTrue(np.array_equal(serial.features, threaded.features))
        self.assertTrue(np.array_equal(serial.alpha, threaded.alpha))

    def test_behind_camera_ignored(self):
        cloud = GaussianCloud(np.array([[0.0, 0.0, -1.0]]), np.ones((1, 3)), np.full((1, 3), 0.05),
                              np.ones(1), np.zeros(1))
        fi = rasterize_gaussians(cloud, _camera())
        self.assertFalse(fi.alpha.any())


class TestDecode(unittest.TestCase):
    """Tests for decode_features and push-pull filling."""

    def test_full_coverage_returns_rgb(self):
        rng = np.random.default_rng(1)
        rgb = rng.uniform(0.0, 1.0, (10, 12, 3))
        fi = FeatureImage(np.concatenate([0.5 * rgb, np.zeros((10, 12, 2))], axis=-1), np.full((10, 12), 0.5))
        decoded = decode_features(fi)
        self.assertTrue(np.allclose(decoded.image.values, rgb))
        self.assertTrue(decoded.hull.all())

    def test_hole_filled_convexly(self):
        rng = np.random.default_rng(2)
        rgb = rng.uniform(0.2, 0.8, (12, 12, 3))
        alpha = np.ones((12, 12))
        alpha[5:7, 5:7] = 0.0
        decoded = decode_features(FeatureImage(rgb * alpha[:, :, None], alpha))
        hole = decoded.image.values[5:7, 5:7]
        self.assertTrue(decoded.hull[5:7, 5:7].all())
        self.assertTrue(np.all(hole >= 0.2) and np.all(hole <= 0.8))

    def test_outside_hull_is_zero(self):
        alpha = np.zeros((16, 16))
        alpha[4:10, 4:10] = 1.0
        features = np.zeros((16, 16, 3))
        features[4:10, 4:10] = 0.7
        decoded = decode_features(FeatureImage(features, alpha))
        self.assertFalse(decoded.hull[14:, 14:].any())
        self.assertFalse(decoded.image.values[14:, 14:].any())

    def test_push_pull_keeps_known(self):
        values = np.arange(16, dtype=np.float64).reshape(4, 4)
        known = np.ones((4, 4), dtype=bool)
        known[1, 2] = False
        filled = push_pull_fill(values, known)
        self.assertTrue(np.array_equal(filled[known], values[known]))
        self.assertGreaterEqual(filled[1, 2], values[known].min())
        self.assertLessEqual(filled[1, 2], values[known].max())

    def test_push_pull_nothing_known(self):
        filled = push_pull_fill(np.ones((3, 3)), np.zeros((3, 3), dtype=bool))
        self.assertFalse(filled.any())


class TestRenderLatentView(unittest.TestCase):
    """Tests for the encode, lift, rasterize and decode chain."""

    def test_plane_seen_from_source_camera(self):
        rig = default_rig(resolution=64)
        scene = plane_scene(seed=3)
        views = {n: render_ground_truth(scene, rig.cameras[n]) for n in ("cam0", "cam2", "cam3")}
        cloud, fi, decoded = render_latent_view(
            {n: v.image for n, v in views.items()},
            {n: v.depth for n, v in views.items()},
            {n: v.mask for n, v in views.items()},
            rig.cameras,
            rig.cameras["cam0"],
        )
        self.assertEqual(fi.width, 32)
        self.assertGreater(len(cloud), 0)
        truth = render_ground_truth(scene, rig.cameras["cam0"].scaled(0.5))
        inside = truth.mask & decoded.hull
        self.assertGreater(inside.sum(), 0.8 * truth.mask.sum())
        mean_error = np.abs(decoded.image.values[inside].mean(axis=0) - truth.image.values[inside].mean(axis=0))
        self.assertTrue(np.all(mean_error < 0.05))


if __name__ == '__main__':
    unittest.main()
