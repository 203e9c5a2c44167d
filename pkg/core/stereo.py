"""
Cascaded Stereo Matcher

Pure Python implementation - NO Django imports.
Coarse-to-fine zero-mean NCC matching driven by update sweeps, with disparity
initialization and a left-right consistency check, plus the narrow-to-wide
baseline cascade that seeds the lower camera pair from the upper one.

Every sweep is a simultaneous update: each pixel compares its current
disparity, a window around it and the current values of its four neighbors.
At the coarsest level the window grows by `search_radius` per sweep, so an
uninitialized pixel can travel at most r * k (k + 1) / 2 coarse pixels in k
sweeps. Finer levels refine the upsampled estimate with one +-r sweep
followed by +-1 sweeps.
"""
import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from core.errors import InvalidArgumentError
from core.geometry import (
    StereoPair,
    depth_to_disparity,
    depth_to_points,
    disparity_to_depth,
    points_zbuffer,
)
from core.imaging import DepthMap, DisparityMap, ImageBuffer, frozen_array, luminance
from core.rig import RigSpec


logger = logging.getLogger(__name__)

NO_SCORE = -np.inf


@dataclass(frozen=True)
class MatcherConfig:
    """
    Block-matcher parameters.

    `max_disparity` is in full-resolution pixels; None derives it per pair as
    f * B / min_depth. `search_radius` is in pixels of the level being
    searched. The pyramid stops once the short side would drop below
    `coarse_size`, capped at `pyramid_levels` levels.
    """
    max_disparity: float | None = None
    min_depth: float = 1.0
    block_radius: int = 2
    pyramid_levels: int = 6
    coarse_size: int = 64
    iterations: int = 3
    search_radius: int = 2
    lr_threshold: float = 1.0
    min_texture: float = 0.01
    min_score: float = 0.3
    init_fill_radius: float = 8.0
    zbuffer_radius: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.max_disparity is not None and not self.max_disparity > 0:
            raise InvalidArgumentError(f"max_disparity must be positive, got {self.max_disparity}")
        if self.search_radius < 0 or (self.max_disparity is not None and self.search_radius > self.max_disparity):
            raise InvalidArgumentError(
                f"search_radius must lie in [0, max_disparity], got {self.search_radius}"
            )
        if not self.min_depth > 0:
            raise InvalidArgumentError(f"min_depth must be positive, got {self.min_depth}")
        if self.iterations < 1:
            raise InvalidArgumentError(f"iterations must be >= 1, got {self.iterations}")
        if self.block_radius < 1 or self.pyramid_levels < 1 or self.coarse_size < 8:
            raise InvalidArgumentError("block_radius and pyramid_levels must be >= 1, coarse_size >= 8")
        if self.lr_threshold < 0 or self.workers < 1:
            raise InvalidArgumentError("lr_threshold must be >= 0 and workers >= 1")

    def disparity_limit(self, pair: StereoPair) -> float:
        """The configured d_max, or the disparity of a surface at min_depth."""
        if self.max_disparity is not None:
            return float(self.max_disparity)
        return pair.focal * pair.baseline / self.min_depth

    def for_pair(self, pair: StereoPair) -> "MatcherConfig":
        """Copy with max_disparity resolved for the pair."""
        return dataclasses.replace(self, max_disparity=self.disparity_limit(pair))


@dataclass(frozen=True)
class StereoResult:
    """Both-direction disparities of a pair with per-pixel matching confidence."""
    reference: DisparityMap
    target: DisparityMap
    confidence: np.ndarray
    target_confidence: np.ndarray
    iterations: int

    def __post_init__(self):
        object.__setattr__(self, "confidence", frozen_array(self.confidence))
        object.__setattr__(self, "target_confidence", frozen_array(self.target_confidence))


@dataclass(frozen=True)
class CascadeResult:
    """Depth maps of the three source views plus the intermediate stereo results."""
    depths: dict
    upper: StereoResult
    lower: StereoResult
    inits: dict


@dataclass(frozen=True)
class EPEReport:
    """End-point error and the fractions of pixels under 1, 3 and 5 px."""
    epe: float
    within_1px: float
    within_3px: float
    within_5px: float
    count: int

    def to_dict(self) -> dict:
        return {
            "epe": self.epe,
            "1px": self.within_1px,
            "3px": self.within_3px,
            "5px": self.within_5px,
            "count": self.count,
        }


# ---------------------------------------------------------------------------
# Matching kernels
# ---------------------------------------------------------------------------

def _patches(gray: np.ndarray, radius: int, min_texture: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm zero-mean patch vectors (H x W x n, float32) and their texture mask."""
    size = 2 * radius + 1
    padded = np.pad(gray, radius, mode="edge")
    windows = sliding_window_view(padded, (size, size)).reshape(gray.shape + (size * size,))
    centered = windows - windows.mean(axis=-1, keepdims=True)
    std = np.sqrt(np.mean(centered ** 2, axis=-1))
    active = std > min_texture
    norm = np.where(active, std * np.sqrt(size * size), 1.0)
    return (centered / norm[..., None]).astype(np.float32), active


def _score(ref_p, tgt_p, tgt_active, rows, cols, disp, d_max):
    """ZNCC between reference pixels (rows, cols) and target pixels (rows, cols + disp)."""
    width = tgt_p.shape[1]
    target_cols = cols + disp
    inside = (disp >= 0) & (disp <= d_max) & (target_cols >= 0) & (target_cols < width)
    clipped = np.clip(target_cols, 0, width - 1)
    score = np.einsum("...n,...n->...", ref_p[rows, cols], tgt_p[rows, clipped]).astype(np.float64)
    return np.where(inside & tgt_active[rows, clipped], score, NO_SCORE)


def _fill_nearest(values: np.ndarray, valid: np.ndarray, max_distance: float | None) -> tuple[np.ndarray, np.ndarray]:
    """Fill invalid entries from the nearest valid one, optionally within `max_distance` pixels."""
    if not valid.any():
        return np.zeros_like(values), np.zeros_like(valid)
    if valid.all():
        return values.copy(), valid.copy()
    distance, (ii, jj) = ndimage.distance_transform_edt(~valid, return_indices=True)
    filled = values[ii, jj]
    reach = np.ones_like(valid) if max_distance is None else distance <= max_distance
    return np.where(reach, filled, 0.0), reach


def _neighbors(values: np.ndarray) -> list[np.ndarray]:
    """The values of the left, right, upper and lower neighbor of every pixel (edges replicated)."""
    padded = np.pad(values, 1, mode="edge")
    return [padded[1:-1, :-2], padded[1:-1, 2:], padded[:-2, 1:-1], padded[2:, 1:-1]]


def _sweeps(ref_p, tgt_p, tgt_active, start, d_max, radii):
    """
    Run one simultaneous update per entry of `radii`.

    Candidates are the current disparity +-radius and the current disparities
    of the four neighbors, all taken from the previous sweep. The higher score
    wins; equal scores keep the smaller disparity.
    """
    height, width = start.shape
    rows, cols = np.mgrid[0:height, 0:width]
    best = np.clip(np.rint(start), 0, d_max).astype(np.int64)
    best_score = _score(ref_p, tgt_p, tgt_active, rows, cols, best, d_max)
    for radius in radii:
        reach = min(int(radius), d_max)
        previous = best.copy()
        candidates = [previous + offset for offset in range(-reach, reach + 1) if offset != 0]
        candidates += _neighbors(previous)
        for candidate in candidates:
            in_range = (candidate >= 0) & (candidate <= d_max)
            if not in_range.any():
                continue
            score = _score(ref_p, tgt_p, tgt_active, rows, cols, candidate, d_max)
            better = (score > best_score) | ((score == best_score) & (candidate < best) & np.isfinite(score))
            best = np.where(better, candidate, best)
            best_score = np.where(better, score, best_score)
    return best, best_score


def _sweep_radii(cfg: MatcherConfig, coarsest: bool) -> list[int]:
    """Widening windows at the coarsest level; one +-r then +-1 refinements above it."""
    if coarsest:
        return [cfg.search_radius * t for t in range(1, cfg.iterations + 1)]
    return [cfg.search_radius] + [1] * (cfg.iterations - 1)


def _subpixel(ref_p, tgt_p, tgt_active, best, best_score, d_max):
    """Parabolic refinement around the integer optimum, offset clipped to +-0.5 px."""
    height, width = best.shape
    rows, cols = np.mgrid[0:height, 0:width]
    minus = _score(ref_p, tgt_p, tgt_active, rows, cols, best - 1, d_max)
    plus = _score(ref_p, tgt_p, tgt_active, rows, cols, best + 1, d_max)
    offset = np.zeros((height, width))
    with np.errstate(divide="ignore", invalid="ignore"):
        curvature = minus - 2.0 * best_score + plus
        usable = np.isfinite(minus) & np.isfinite(plus) & np.isfinite(best_score) & (curvature < 0)
        offset[usable] = (minus[usable] - plus[usable]) / (2.0 * curvature[usable])
    return best + np.clip(offset, -0.5, 0.5)


def _pyramid(gray: np.ndarray, levels: int) -> list[np.ndarray]:
    out = [gray]
    for _ in range(levels - 1):
        out.append(ndimage.gaussian_filter(out[-1], sigma=1.0, mode="nearest")[::2, ::2])
    return out


def _level_count(shape: tuple[int, int], cfg: MatcherConfig) -> int:
    levels = 1
    while levels < cfg.pyramid_levels and min(shape) / 2 ** levels >= cfg.coarse_size:
        levels += 1
    return levels


def _match_direction(ref_gray, tgt_gray, init, init_valid, cfg: MatcherConfig, label: str):
    """Estimate disparities for one direction; returns (disparity, score, texture mask) at full resolution."""
    levels = _level_count(ref_gray.shape, cfg)
    ref_pyr = _pyramid(ref_gray, levels)
    tgt_pyr = _pyramid(tgt_gray, levels)

    # Uninitialized pixels start from zero disparity
    coarse_scale = 2 ** (levels - 1)
    start = np.where(init_valid, init, 0.0)[::coarse_scale, ::coarse_scale] / coarse_scale

    best = best_score = active = active_prev = None
    for level in range(levels - 1, -1, -1):
        scale = 2 ** level
        d_max = int(np.floor(cfg.max_disparity / scale))
        ref_p, active = _patches(ref_pyr[level], cfg.block_radius, cfg.min_texture)
        tgt_p, tgt_active = _patches(tgt_pyr[level], cfg.block_radius, cfg.min_texture)

        if best is not None:
            height, width = ref_pyr[level].shape
            ii = np.arange(height)[:, None] // 2
            jj = np.arange(width)[None, :] // 2
            coarse_ok = np.isfinite(best_score) & active_prev
            filled, _ = _fill_nearest(best.astype(np.float64), coarse_ok, None)
            start = 2.0 * filled[ii, jj]

        radii = _sweep_radii(cfg, coarsest=level == levels - 1)
        best, best_score = _sweeps(ref_p, tgt_p, tgt_active, start, d_max, radii)
        active_prev = active
        logger.debug(
            "%s level %d: %dx%d, d_max %d, %d sweeps, %.1f%% matched",
            label, level, ref_pyr[level].shape[1], ref_pyr[level].shape[0], d_max, len(radii),
            100.0 * np.mean(np.isfinite(best_score)),
        )

    disparity = _subpixel(ref_p, tgt_p, tgt_active, best, best_score, int(np.floor(cfg.max_disparity)))
    return np.clip(disparity, 0.0, cfg.max_disparity), best_score, active


def _prepare_init(init: DisparityMap | None, shape: tuple[int, int], cfg: MatcherConfig):
    """Initialization values and validity; values outside [0, d_max] count as uninitialized."""
    if init is None:
        return np.zeros(shape), np.zeros(shape, dtype=bool)
    if init.shape != shape:
        raise InvalidArgumentError(f"Initialization is {init.shape}, expected {shape}")
    valid = np.array(init.mask)
    outside = valid & ((init.disparity < 0) | (init.disparity > cfg.max_disparity))
    if outside.any():
        logger.warning(
            "Ignoring %d initialization values outside [0, %.1f] px",
            int(outside.sum()), cfg.max_disparity,
        )
        valid &= ~outside
    values = np.where(valid, init.disparity, 0.0)
    return _fill_nearest(values, valid, cfg.init_fill_radius)


def _lr_consistent(disp_a, valid_a, disp_b, valid_b, sign: int, threshold: float) -> np.ndarray:
    """|d_a(u) - d_b(u + sign * d_a(u))| <= threshold, with the partner pixel valid."""
    height, width = disp_a.shape
    cols = np.floor(np.arange(width)[None, :] + sign * disp_a + 0.5).astype(np.int64)
    inside = (cols >= 0) & (cols < width)
    clipped = np.clip(cols, 0, width - 1)
    rows = np.arange(height)[:, None]
    partner = disp_b[rows, clipped]
    partner_valid = valid_b[rows, clipped]
    return valid_a & inside & partner_valid & (np.abs(disp_a - partner) <= threshold)


def match_images(
    img_ref: ImageBuffer,
    img_tgt: ImageBuffer,
    init_ref: DisparityMap | None = None,
    init_tgt: DisparityMap | None = None,
    cfg: MatcherConfig | None = None,
) -> StereoResult:
    """
    Match a rectified image pair in both directions.

    A reference pixel (u, v) matches target (u + d, v); the target map holds
    the reverse correspondence (u - d, v). Initializations may be None or
    all-invalid, which starts every pixel from zero disparity.

    Raises:
        InvalidArgumentError: On size mismatch, or when cfg leaves max_disparity
            unset (match_pair derives it from the pair)
    """
    cfg = cfg or MatcherConfig()
    if cfg.max_disparity is None:
        raise InvalidArgumentError("match_images needs an explicit max_disparity")
    if img_ref.shape != img_tgt.shape:
        raise InvalidArgumentError(f"Image sizes differ: {img_ref.shape} vs {img_tgt.shape}")
    shape = img_ref.shape
    ref_gray = luminance(img_ref)
    tgt_gray = luminance(img_tgt)
    ref_init, ref_init_valid = _prepare_init(init_ref, shape, cfg)
    tgt_init, tgt_init_valid = _prepare_init(init_tgt, shape, cfg)

    # Target direction runs on mirrored images so both directions share the d >= 0 search
    jobs = [
        (ref_gray, tgt_gray, ref_init, ref_init_valid, cfg, "reference"),
        (tgt_gray[:, ::-1], ref_gray[:, ::-1], tgt_init[:, ::-1], tgt_init_valid[:, ::-1], cfg, "target"),
    ]
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            (d_ref, s_ref, a_ref), (d_tgt, s_tgt, a_tgt) = list(pool.map(lambda job: _match_direction(*job), jobs))
    else:
        (d_ref, s_ref, a_ref), (d_tgt, s_tgt, a_tgt) = [_match_direction(*job) for job in jobs]
    d_tgt, s_tgt, a_tgt = d_tgt[:, ::-1], s_tgt[:, ::-1], a_tgt[:, ::-1]

    valid_ref = a_ref & np.isfinite(s_ref) & (s_ref > cfg.min_score)
    valid_tgt = a_tgt & np.isfinite(s_tgt) & (s_tgt > cfg.min_score)
    keep_ref = _lr_consistent(d_ref, valid_ref, d_tgt, valid_tgt, +1, cfg.lr_threshold)
    keep_tgt = _lr_consistent(d_tgt, valid_tgt, d_ref, valid_ref, -1, cfg.lr_threshold)

    conf_ref = np.where(keep_ref, np.clip(np.nan_to_num(s_ref, neginf=0.0), 0.0, 1.0), 0.0)
    conf_tgt = np.where(keep_tgt, np.clip(np.nan_to_num(s_tgt, neginf=0.0), 0.0, 1.0), 0.0)
    # A zero score would leave a valid pixel with zero confidence
    keep_ref &= conf_ref > 0
    keep_tgt &= conf_tgt > 0

    logger.debug(
        "Matched %dx%d pair: %.1f%% / %.1f%% pixels consistent",
        shape[1], shape[0], 100.0 * keep_ref.mean(), 100.0 * keep_tgt.mean(),
    )
    return StereoResult(
        reference=DisparityMap.from_array(d_ref, keep_ref),
        target=DisparityMap.from_array(d_tgt, keep_tgt),
        confidence=conf_ref,
        target_confidence=conf_tgt,
        iterations=cfg.iterations,
    )


def match_pair(
    pair: StereoPair,
    img_ref: ImageBuffer,
    img_tgt: ImageBuffer,
    init_ref: DisparityMap | None = None,
    init_tgt: DisparityMap | None = None,
    cfg: MatcherConfig | None = None,
) -> StereoResult:
    """
    Estimate both-direction disparities of a rectified pair.

    Args:
        pair: Rectified stereo pair (fixes the expected resolution)
        img_ref: Reference camera image
        img_tgt: Target camera image
        init_ref: Optional reference-view disparity initialization
        init_tgt: Optional target-view disparity initialization
        cfg: Matcher parameters; an unset max_disparity is derived from the pair

    Returns:
        StereoResult with left-right consistent disparities

    Raises:
        InvalidArgumentError: If image or initialization sizes do not match the pair
    """
    expected = (pair.height, pair.width)
    for name, img in (("reference", img_ref), ("target", img_tgt)):
        if img.shape != expected:
            raise InvalidArgumentError(f"{name} image is {img.shape}, pair resolution is {expected}")
    cfg = (cfg or MatcherConfig()).for_pair(pair)
    logger.debug("Matching pair with d_max %.1f px", cfg.max_disparity)
    return match_images(img_ref, img_tgt, init_ref, init_tgt, cfg)


def _masked(depth: DepthMap, mask) -> DepthMap:
    if mask is None:
        return depth
    return DepthMap.from_array(depth.depth, depth.mask & np.asarray(mask, dtype=bool))


def cascade_estimate(
    rig: RigSpec,
    images: dict,
    masks: dict | None = None,
    cfg: MatcherConfig | None = None,
    initialize: bool = True,
) -> CascadeResult:
    """
    Narrow-to-wide cascade producing depth maps for cam0, cam2 and cam3.

    The upper pair starts from zero disparity; cam0's depth is lifted
    to points and z-buffered into cam2 and cam3, whose disparities seed the
    lower-pair match. cam1's disparity only takes part in the consistency
    check and is discarded.

    Args:
        rig: Four-camera rig
        images: ImageBuffer per camera name (or a sequence in cam0..cam3 order)
        masks: Optional foreground mask per camera name
        cfg: Matcher parameters shared by both pairs (d_max resolves per pair)
        initialize: Seed the lower pair from the upper one (off for ablations)

    Returns:
        CascadeResult
    """
    cfg = cfg or MatcherConfig()
    if not isinstance(images, dict):
        images = dict(zip(("cam0", "cam1", "cam2", "cam3"), images))
    masks = masks or {}
    upper_pair, lower_pair = rig.upper_pair, rig.lower_pair
    if upper_pair.baseline >= lower_pair.baseline:
        raise InvalidArgumentError("Cascade needs the upper baseline narrower than the lower baseline")

    upper = match_pair(upper_pair, images["cam0"], images["cam1"], None, None, cfg)
    depth0 = _masked(disparity_to_depth(upper_pair, upper.reference), masks.get("cam0"))

    inits = {}
    if initialize:
        points = depth_to_points(upper_pair.reference, depth0)
        for name in ("cam2", "cam3"):
            zbuffer = points_zbuffer(points, rig.cameras[name], radius=cfg.zbuffer_radius)
            inits[name] = depth_to_disparity(lower_pair, zbuffer)
        logger.debug(
            "Cascade init from %d points: cam2 %.1f%%, cam3 %.1f%% covered",
            len(points), 100.0 * inits["cam2"].mask.mean(), 100.0 * inits["cam3"].mask.mean(),
        )

    lower = match_pair(lower_pair, images["cam2"], images["cam3"], inits.get("cam2"), inits.get("cam3"), cfg)
    depths = {
        "cam0": depth0,
        "cam2": _masked(disparity_to_depth(lower_pair, lower.reference), masks.get("cam2")),
        "cam3": _masked(disparity_to_depth(lower_pair, lower.target), masks.get("cam3")),
    }
    return CascadeResult(depths=depths, upper=upper, lower=lower, inits=inits)


def epe(pred: DisparityMap, gt: DisparityMap) -> EPEReport:
    """
    Mean absolute disparity error over pixels valid in both maps.

    Raises:
        InvalidArgumentError: On size mismatch or when no pixel is valid in both
    """
    if pred.shape != gt.shape:
        raise InvalidArgumentError(f"Disparity maps differ in size: {pred.shape} vs {gt.shape}")
    both = pred.mask & gt.mask
    count = int(both.sum())
    if count == 0:
        raise InvalidArgumentError("Disparity maps share no valid pixels")
    error = np.abs(pred.disparity[both] - gt.disparity[both])
    return EPEReport(
        epe=float(error.mean()),
        within_1px=float(np.mean(error < 1.0)),
        within_3px=float(np.mean(error < 3.0)),
        within_5px=float(np.mean(error < 5.0)),
        count=count,
    )
