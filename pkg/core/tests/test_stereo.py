"""
Tests for the block matcher and the narrow-to-wide cascade.
"""
import dataclasses
import unittest

import numpy as np

from core.errors import InvalidArgumentError
from core.geometry import CameraModel, StereoPair, depth_to_disparity
from core.imaging import DisparityMap, ImageBuffer
from core.rig import default_rig
from core.scene import mannequin_scene, plane_scene, render_ground_truth
from core.stereo import MatcherConfig, cascade_estimate, epe, match_images, match_pair


def _pair(width=128, height=64, focal=100.0, baseline=0.5):
    def camera(x):
        return CameraModel(fx=focal, fy=focal, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                           width=width, height=height, translation=-np.array([x, 0.0, 0.0]))
    return StereoPair.from_cameras(camera(baseline / 2.0), camera(-baseline / 2.0))


def _render_pair(pair, scene):
    ref = render_ground_truth(scene, pair.reference)
    tgt = render_ground_truth(scene, pair.target)
    return ref, tgt


def _gt_disparity(pair, view):
    return depth_to_disparity(pair, view.depth)


class TestMatcherConfig(unittest.TestCase):
    """Tests for MatcherConfig validation and the derived disparity range."""

    def test_search_radius_bounded_by_range(self):
        with self.assertRaises(InvalidArgumentError):
            MatcherConfig(max_disparity=4, search_radius=5)

    def test_iterations_positive(self):
        with self.assertRaises(InvalidArgumentError):
            MatcherConfig(iterations=0)

    def test_max_disparity_positive(self):
        with self.assertRaises(InvalidArgumentError):
            MatcherConfig(max_disparity=0)

    def test_max_disparity_derived_from_pair(self):
        """f = 100, B = 0.5 and a 1 m nearest surface give d_max = 50 px."""
        self.assertIsNone(MatcherConfig().max_disparity)
        self.assertAlmostEqual(MatcherConfig().disparity_limit(_pair()), 50.0)
        self.assertAlmostEqual(MatcherConfig(min_depth=2.0).for_pair(_pair()).max_disparity, 25.0)
        self.assertEqual(MatcherConfig(max_disparity=30).disparity_limit(_pair()), 30.0)

    def test_desk_rig_range_exceeds_fixed_cap(self):
        """At 1024 px the wide pair spans hundreds of pixels."""
        rig = default_rig(resolution=1024)
        limit = MatcherConfig().disparity_limit(rig.lower_pair)
        self.assertGreater(limit, 400.0)
        self.assertGreater(limit, rig.lower_pair.focal * rig.lower_pair.baseline / 1.1)

    def test_match_images_needs_explicit_range(self):
        img = ImageBuffer(np.zeros((8, 8, 3)))
        with self.assertRaises(InvalidArgumentError):
            match_images(img, img)


class TestMatchPair(unittest.TestCase):
    """Tests for match_pair on analytic scenes."""

    # Window covers [0, d_max] in the first sweep
    FULL = MatcherConfig(max_disparity=64, search_radius=64)

    @classmethod
    def setUpClass(cls):
        cls.pair = _pair()
        cls.scene = plane_scene(width=3.0, height=3.0, volume=False)
        cls.ref, cls.tgt = _render_pair(cls.pair, cls.scene)
        cls.gt = _gt_disparity(cls.pair, cls.ref)

    def test_plane_at_forty_pixels(self):
        """f = 100, B = 0.5, z = 1.25: zero-init full search recovers d = 40 within 0.5 px."""
        self.assertTrue(np.allclose(self.gt.disparity, 40.0))
        result = match_pair(self.pair, self.ref.image, self.tgt.image, cfg=self.FULL)
        report = epe(result.reference, self.gt)
        self.assertLess(report.epe, 0.5)
        self.assertGreater(result.reference.mask.mean(), 0.4)

    def test_ground_truth_init_is_fixed_point(self):
        """Initializing with the true disparity keeps the answer within 0.5 px after one sweep."""
        cfg = MatcherConfig(iterations=1, search_radius=2)
        result = match_pair(self.pair, self.ref.image, self.tgt.image, self.gt, self.gt, cfg)
        error = np.abs(result.reference.disparity - 40.0)[result.reference.mask]
        self.assertTrue(result.reference.mask.any())
        self.assertGreater(float(np.mean(error < 0.5)), 0.95)

    def test_output_within_range_and_confidence_zero_where_invalid(self):
        result = match_pair(self.pair, self.ref.image, self.tgt.image, cfg=self.FULL)
        self.assertTrue(result.reference.within_range(self.FULL.max_disparity))
        self.assertTrue(np.all(result.confidence[~result.reference.mask] == 0.0))
        self.assertTrue(np.all(result.confidence[result.reference.mask] > 0.0))
        self.assertTrue(np.all((result.confidence >= 0) & (result.confidence <= 1)))

    def test_unmatchable_border_invalidated(self):
        """Reference pixels whose match would leave the target image are invalid."""
        result = match_pair(self.pair, self.ref.image, self.tgt.image, cfg=self.FULL)
        self.assertFalse(result.reference.mask[:, -30:].any())

    def test_textureless_input_all_invalid(self):
        flat = ImageBuffer(np.full((64, 128, 3), 0.5))
        result = match_pair(self.pair, flat, flat, cfg=self.FULL)
        self.assertFalse(result.reference.mask.any())
        self.assertTrue(np.all(result.confidence == 0.0))

    def test_thread_count_does_not_change_result(self):
        serial = match_pair(self.pair, self.ref.image, self.tgt.image, cfg=dataclasses.replace(self.FULL, workers=1))
        threaded = match_pair(self.pair, self.ref.image, self.tgt.image, cfg=dataclasses.replace(self.FULL, workers=2))
        self.assertTrue(np.array_equal(serial.reference.disparity, threaded.reference.disparity))
        self.assertTrue(np.array_equal(serial.target.disparity, threaded.target.disparity))

    def test_mirrored_swap_is_symmetric(self):
        """Swapping and mirroring the images swaps the two disparity maps."""
        forward = match_images(self.ref.image, self.tgt.image, cfg=self.FULL)
        mirrored = match_images(
            ImageBuffer(self.tgt.image.values[:, ::-1]),
            ImageBuffer(self.ref.image.values[:, ::-1]),
            cfg=self.FULL,
        )
        back = mirrored.reference.disparity[:, ::-1]
        both = forward.target.mask & mirrored.reference.mask[:, ::-1]
        self.assertTrue(both.any())
        self.assertLessEqual(float(np.abs(back[both] - forward.target.disparity[both]).max()), 1.0)

    def test_zero_init_reach_is_bounded_by_sweeps(self):
        """Without initialization, k sweeps of radius 2 reach at most 2 + 4 + 6 = 12 px; the plane sits at 40."""
        cfg = MatcherConfig(max_disparity=64, iterations=3, search_radius=2)
        result = match_pair(self.pair, self.ref.image, self.tgt.image, cfg=cfg)
        reach = 12 + 0.5
        self.assertLessEqual(float(result.reference.disparity.max()), reach)

    def test_init_outside_range_is_ignored(self):
        """Initialization values beyond d_max behave exactly like no initialization."""
        cfg = MatcherConfig(max_disparity=64, iterations=2)
        wild = DisparityMap(np.full(self.gt.shape, 500.0))
        with self.assertLogs("core.stereo", level="WARNING"):
            seeded = match_pair(self.pair, self.ref.image, self.tgt.image, wild, wild, cfg)
        plain = match_pair(self.pair, self.ref.image, self.tgt.image, cfg=cfg)
        self.assertTrue(np.array_equal(seeded.reference.disparity, plain.reference.disparity))
        self.assertTrue(np.array_equal(seeded.reference.mask, plain.reference.mask))

    def test_size_mismatch_rejected(self):
        small = ImageBuffer(np.zeros((32, 32, 3)))
        with self.assertRaises(InvalidArgumentError):
            match_pair(self.pair, small, small)

    def test_init_size_mismatch_rejected(self):
        with self.assertRaises(InvalidArgumentError):
            match_pair(self.pair, self.ref.image, self.tgt.image, DisparityMap.empty(10, 10))


class TestCascade(unittest.TestCase):
    """Tests for cascade_estimate."""

    def _render(self, rig, scene):
        views = {name: render_ground_truth(scene, camera) for name, camera in rig.cameras.items()}
        return views, {n: v.image for n, v in views.items()}, {n: v.mask for n, v in views.items()}

    def test_plane_depths_match_ground_truth(self):
        """On a plane every returned depth map agrees with the analytic depth."""
        rig = default_rig(resolution=128)
        views, images, masks = self._render(rig, plane_scene(seed=1))
        result = cascade_estimate(rig, images, masks)
        self.assertEqual(set(result.depths), {"cam0", "cam2", "cam3"})
        tolerances = {"cam0": 0.025, "cam2": 0.005, "cam3": 0.005}
        for name, depth in result.depths.items():
            with self.subTest(view=name):
                self.assertGreater(depth.mask.sum(), 100)
                error = np.abs(depth.depth - views[name].depth.depth)[depth.mask]
                self.assertLess(float(np.median(error)), tolerances[name])
                self.assertFalse((depth.mask & ~masks[name]).any())

    def test_initializations_cover_lower_views(self):
        rig = default_rig(resolution=64)
        _, images, masks = self._render(rig, plane_scene(seed=2))
        result = cascade_estimate(rig, images, masks)
        self.assertEqual(set(result.inits), {"cam2", "cam3"})
        self.assertTrue(result.inits["cam2"].mask.any())

    def test_without_initialization(self):
        rig = default_rig(resolution=64)
        _, images, masks = self._render(rig, plane_scene(seed=2))
        result = cascade_estimate(rig, images, masks, initialize=False)
        self.assertEqual(result.inits, {})

    def test_accepts_image_sequence(self):
        rig = default_rig(resolution=64)
        _, images, _ = self._render(rig, plane_scene(seed=2))
        result = cascade_estimate(rig, [images[n] for n in ("cam0", "cam1", "cam2", "cam3")])
        self.assertIn("cam0", result.depths)

    def _wide_pair_epe(self, rig, views, images, inits, iterations):
        gt = depth_to_disparity(rig.lower_pair, views["cam2"].depth)
        gt = DisparityMap.from_array(gt.disparity, gt.mask & views["cam2"].mask)
        # LR and score gates off so every run is scored on the same textured pixels
        cfg = MatcherConfig(iterations=iterations, lr_threshold=1e3, min_score=-1.0)
        result = match_pair(rig.lower_pair, images["cam2"], images["cam3"], inits.get("cam2"), inits.get("cam3"), cfg)
        return epe(result.reference, gt).epe

    def test_initialization_ablation(self):
        """
        Over 20 seeded mannequin scenes, three seeded sweeps beat three unseeded
        ones and come within 10% of sixteen unseeded sweeps.
        """
        rig = default_rig(resolution=64)
        seeded, unseeded, unseeded_long = [], [], []
        for seed in range(20):
            views, images, masks = self._render(rig, mannequin_scene(seed=seed))
            inits = cascade_estimate(rig, images, masks).inits
            seeded.append(self._wide_pair_epe(rig, views, images, inits, 3))
            unseeded.append(self._wide_pair_epe(rig, views, images, {}, 3))
            unseeded_long.append(self._wide_pair_epe(rig, views, images, {}, 16))
        self.assertLess(np.mean(seeded), np.mean(unseeded))
        self.assertLessEqual(np.mean(seeded), 1.1 * np.mean(unseeded_long))
        self.assertLess(np.mean(unseeded_long), np.mean(unseeded))

    def test_desk_resolution_plane(self):
        """At 512 px the wide pair spans ~175 px; the cascade still lands within 5 mm."""
        rig = default_rig(resolution=512)
        views, images, masks = self._render(rig, plane_scene(seed=3))
        result = cascade_estimate(rig, images, masks)
        d_max = MatcherConfig().disparity_limit(rig.lower_pair)
        self.assertTrue(result.lower.reference.within_range(d_max))
        depth = result.depths["cam2"]
        self.assertGreater(depth.mask.mean(), 0.3)
        error = np.abs(depth.depth - views["cam2"].depth.depth)[depth.mask]
        self.assertLess(float(np.median(error)), 0.005)


class TestEPE(unittest.TestCase):
    """Tests for the end-point error report."""

    def test_identical(self):
        gt = DisparityMap(np.full((4, 4), 10.0))
        report = epe(gt, gt)
        self.assertEqual(report.epe, 0.0)
        self.assertEqual((report.within_1px, report.within_3px, report.within_5px), (1.0, 1.0, 1.0))

    def test_constant_offset(self):
        gt = DisparityMap(np.full((4, 4), 10.0))
        report = epe(DisparityMap(np.full((4, 4), 12.0)), gt)
        self.assertAlmostEqual(report.epe, 2.0)
        self.assertEqual((report.within_1px, report.within_3px, report.within_5px), (0.0, 1.0, 1.0))

    def test_half_off_by_four(self):
        gt = DisparityMap(np.full((4, 4), 10.0))
        pred = np.full((4, 4), 10.0)
        pred[:2] = 14.0
        report = epe(DisparityMap(pred), gt)
        self.assertAlmostEqual(report.epe, 2.0)
        self.assertEqual((report.within_1px, report.within_3px, report.within_5px), (0.5, 0.5, 1.0))

    def test_only_mutually_valid_pixels_count(self):
        gt = DisparityMap.from_array(np.array([[1.0, 5.0]]), np.array([[True, False]]))
        pred = DisparityMap(np.array([[1.0, 0.0]]))
        self.assertEqual(epe(pred, gt).count, 1)

    def test_no_overlap(self):
        with self.assertRaises(InvalidArgumentError):
            epe(DisparityMap.empty(3, 3), DisparityMap(np.ones((3, 3))))

    def test_size_mismatch(self):
        with self.assertRaises(InvalidArgumentError):
            epe(DisparityMap(np.ones((3, 3))), DisparityMap(np.ones((3, 4))))


if __name__ == '__main__':
    unittest.main()
