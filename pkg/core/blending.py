"""
Occlusion-Aware Blending

Pure Python implementation - NO Django imports.
Warps the source depth maps into the novel view, samples every source image
through the fused geometry, weights each sample by visibility, masks, view
angle and distance, blends, and finally fuses the blend with the upsampled
low-resolution splat rendering where the blend has holes.

Blending happens in linear light.
"""
import logging
from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy import ndimage

from core.errors import InvalidArgumentError
from core.geometry import (
    CameraModel,
    PointSet,
    depth_to_points,
    normals_from_depth,
    points_zbuffer,
    project,
    unproject,
)
from core.imaging import DepthMap, ImageBuffer, bilinear_taps_valid, frozen_array, sample_bilinear


logger = logging.getLogger(__name__)

FEATHER_PX = 3.0
UV_SNAP = 1e-6


@dataclass(frozen=True)
class BlendConfig:
    """Occlusion, consistency and edge thresholds, the minimum total weight and the depth fusion band."""
    delta: float = 0.01
    tau_c: float = 0.15
    edge_threshold: float = 0.02
    w_min: float = 1e-4
    zbuffer_radius: int = 1
    fuse_tolerance: float = 0.05

    def __post_init__(self):
        for name in ("delta", "tau_c", "edge_threshold", "w_min"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if self.zbuffer_radius < 0 or self.fuse_tolerance < 0:
            raise InvalidArgumentError("zbuffer_radius and fuse_tolerance must be >= 0")


@dataclass(frozen=True)
class BlendSample:
    """
    One source view seen through the fused novel-view geometry.

    `uv` and `point_depth` are the back-projected pixel x_i.uv and its depth
    x_i.z in view i; `color` and `depth` are bilinear samples of the view's
    image and depth map there. `camera_points` is x_i in view-i camera
    coordinates.
    """
    uv: np.ndarray
    point_depth: np.ndarray
    camera_points: np.ndarray
    color: np.ndarray
    depth: np.ndarray
    valid: np.ndarray
    weight: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("uv", "point_depth", "camera_points", "color", "depth"):
            object.__setattr__(self, name, frozen_array(getattr(self, name)))
        object.__setattr__(self, "valid", frozen_array(self.valid, dtype=bool))
        weight = np.zeros(self.valid.shape) if self.weight is None else self.weight
        if np.any(np.asarray(weight) < 0):
            raise InvalidArgumentError("Blend weights must be non-negative")
        object.__setattr__(self, "weight", frozen_array(weight))

    def with_weight(self, weight: np.ndarray) -> "BlendSample":
        return BlendSample(self.uv, self.point_depth, self.camera_points, self.color, self.depth, self.valid, weight)


@dataclass(frozen=True)
class BlendResult:
    image: ImageBuffer
    holes: np.ndarray
    total_weight: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "holes", frozen_array(self.holes, dtype=bool))
        object.__setattr__(self, "total_weight", frozen_array(self.total_weight))


@dataclass(frozen=True)
class BlendOutcome:
    """Everything the blending stage produces, kept for inspection outputs."""
    fused_depth: DepthMap
    samples: dict
    blend: BlendResult
    foreground: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "foreground", frozen_array(self.foreground, dtype=bool))


def fuse_depth_to_novel(
    depths: dict,
    cameras: dict,
    novel: CameraModel,
    radius: int = 1,
    tolerance: float = 0.0,
    weights: dict | None = None,
) -> DepthMap:
    """
    Warp every source depth map into the novel view with min-z fusion.

    With a positive `tolerance` the samples within that band behind the
    nearest one are averaged with per-view `weights`, so noisy views do not
    set the surface on their own.

    Args:
        depths: DepthMap per source view
        cameras: CameraModel per source view
        novel: Novel camera
        radius: Splat radius of the z-buffer
        tolerance: Depth band (meters) averaged behind the nearest sample
        weights: Optional positive weight per source view name

    Returns:
        Fused novel-view DepthMap; all-invalid when every input is empty
    """
    point_sets, point_weights = [], []
    offset = 0
    for name, depth in depths.items():
        points = depth_to_points(cameras[name], depth).offset(offset)
        point_sets.append(points)
        point_weights.append(np.full(len(points), 1.0 if weights is None else float(weights[name])))
        offset += depth.height * depth.width
    return points_zbuffer(
        PointSet.concatenate(point_sets), novel, radius=radius,
        tolerance=tolerance, weights=np.concatenate(point_weights) if point_weights else None,
    )


def backproject_sample(
    z_fused: DepthMap,
    novel: CameraModel,
    view: CameraModel,
    img: ImageBuffer,
    depth: DepthMap,
) -> BlendSample:
    """
    Lift each fused novel pixel to 3D, project it into a source view and sample there.

    Samples are invalid where the fused depth is invalid, the point falls
    behind the source camera, or any bilinear tap leaves the image or lands
    on an invalid source depth.
    """
    if img.shape != depth.shape:
        raise InvalidArgumentError("Source image and depth map differ in size")
    height, width = z_fused.shape
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    z = np.where(z_fused.mask, z_fused.depth, 1.0)
    world = unproject(novel, np.stack([u, v], axis=-1), z)
    uv, point_depth = project(view, world)
    # Round-off must not turn a pixel-center hit into a four-tap sample
    snapped = np.rint(uv)
    uv = np.where(np.abs(uv - snapped) < UV_SNAP, snapped, uv)
    camera_points = view.world_to_camera(world)

    front = z_fused.mask & (point_depth > 0) & np.isfinite(uv).all(axis=-1)
    su = np.where(front, uv[..., 0], 0.0)
    sv = np.where(front, uv[..., 1], 0.0)
    valid = front & bilinear_taps_valid(depth.mask, su, sv)

    color = np.where(valid[..., None], sample_bilinear(img.values, su, sv), 0.0)
    sampled_depth = np.where(valid, sample_bilinear(depth.depth, su, sv), 0.0)
    return BlendSample(
        uv=np.stack([su, sv], axis=-1),
        point_depth=np.where(valid, point_depth, 0.0),
        camera_points=np.where(valid[..., None], camera_points, 0.0),
        color=color,
        depth=sampled_depth,
        valid=valid,
    )


def edge_mask(depth: DepthMap, threshold: float) -> np.ndarray:
    """
    Pixels whose depth gradient stays at or below `threshold` meters per pixel.

    Invalid pixels take the depth of their nearest valid neighbor first, so
    the border of the valid region is not an edge by itself.
    """
    if not depth.mask.any():
        return np.zeros(depth.shape, dtype=bool)
    _, (ii, jj) = ndimage.distance_transform_edt(~depth.mask, return_indices=True)
    dz_v, dz_u = np.gradient(depth.depth[ii, jj])
    return depth.mask & (np.maximum(np.abs(dz_u), np.abs(dz_v)) <= threshold)


def _nearest(values: np.ndarray, uv: np.ndarray) -> np.ndarray:
    height, width = values.shape[:2]
    cols = np.clip(np.floor(uv[..., 0] + 0.5).astype(np.int64), 0, width - 1)
    rows = np.clip(np.floor(uv[..., 1] + 0.5).astype(np.int64), 0, height - 1)
    return values[rows, cols]


def novel_foreground(fused: DepthMap, novel: CameraModel, view: CameraModel, view_mask: np.ndarray) -> np.ndarray:
    """
    Foreground of the novel view: the hole-filled fused-depth coverage, cut
    back to the silhouette of `view` (normally the source camera nearest the
    novel one).

    Pixels without fused depth borrow the nearest fused depth for the
    silhouette test. Points projecting outside `view` keep the fused coverage.
    """
    if not fused.mask.any():
        return np.zeros(fused.shape, dtype=bool)
    region = ndimage.binary_fill_holes(fused.mask)
    _, (ii, jj) = ndimage.distance_transform_edt(~fused.mask, return_indices=True)
    height, width = fused.shape
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    world = unproject(novel, np.stack([u, v], axis=-1), fused.depth[ii, jj])
    uv, z = project(view, world)
    inside = (
        np.isfinite(uv).all(axis=-1) & (z > 0)
        & (uv[..., 0] > -0.5) & (uv[..., 0] < view.width - 0.5)
        & (uv[..., 1] > -0.5) & (uv[..., 1] < view.height - 0.5)
    )
    silhouette = _nearest(np.asarray(view_mask, dtype=bool), np.where(inside[..., None], uv, 0.0))
    return region & np.where(inside, silhouette, True)


def view_mask_and_normals(
    sample: BlendSample,
    view: CameraModel,
    depth: DepthMap,
    input_mask: np.ndarray,
    cfg: BlendConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Input-and-edge mask and world-space normals of a view, read at each sample's source pixel.

    Returns:
        Tuple of (mask H x W, world normals H x W x 3); both zero where the sample is invalid
    """
    normal_map = normals_from_depth(view, depth)
    combined = np.asarray(input_mask, dtype=bool) & edge_mask(depth, cfg.edge_threshold) & normal_map.mask
    mask = sample.valid & _nearest(combined, sample.uv)
    normals = _nearest(normal_map.normals, sample.uv) @ view.rotation
    return mask, np.where(mask[..., None], normals, 0.0)


def visibility_weight(
    sample: BlendSample,
    normal: np.ndarray,
    ray: np.ndarray,
    mask: np.ndarray,
    cfg: BlendConfig,
) -> np.ndarray:
    """
    Blend weight mask * occlusion * cos(ray, normal) / |x_cam|.

    Args:
        sample: Back-projected sample of one view
        normal: World-space unit normal at the sample's source pixel (H x W x 3)
        ray: Unit world ray of each novel pixel (H x W x 3)
        mask: Combined view mask at the sample's source pixel (H x W)
        cfg: Blend configuration (occlusion threshold delta)

    Returns:
        Non-negative H x W weights
    """
    visible = np.abs(sample.point_depth - sample.depth) < cfg.delta
    cosine = np.maximum(0.0, -np.einsum("...c,...c->...", ray, normal))
    distance = np.linalg.norm(sample.camera_points, axis=-1)
    usable = np.asarray(mask, dtype=bool) & sample.valid & visible & (distance > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(usable, cosine / distance, 0.0)
    return weight


def weighted_median(colors: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    Per-channel weighted median over the view axis.

    When the cumulative weight lands exactly on half the total, the median is
    the midpoint of the two straddling values, so the result does not depend
    on view order.

    Args:
        colors: V x H x W x C
        weights: V x H x W

    Returns:
        H x W x C; zero where all weights vanish
    """
    order = np.argsort(colors, axis=0, kind="stable")
    sorted_colors = np.take_along_axis(colors, order, axis=0)
    sorted_weights = np.take_along_axis(np.broadcast_to(weights[..., None], colors.shape), order, axis=0)
    cumulative = np.cumsum(sorted_weights, axis=0)
    total = cumulative[-1]
    half = total / 2.0
    tolerance = 1e-12 * total
    lower = np.argmax(cumulative >= half[None] - tolerance[None], axis=0)
    upper = np.argmax(cumulative > half[None] + tolerance[None], axis=0)
    low_value = np.take_along_axis(sorted_colors, lower[None], axis=0)[0]
    high_value = np.take_along_axis(sorted_colors, upper[None], axis=0)[0]
    tied = np.abs(np.take_along_axis(cumulative, lower[None], axis=0)[0] - half) <= tolerance
    median = np.where(tied, 0.5 * (low_value + high_value), low_value)
    return np.where(total > 0, median, 0.0)


def consistency_mask(colors: np.ndarray, weights: np.ndarray, tau_c: float) -> np.ndarray:
    """V x H x W mask of samples within `tau_c` (Euclidean, linear RGB) of the weighted median."""
    median = weighted_median(colors, weights)
    distance = np.linalg.norm(colors - median[None], axis=-1)
    return (weights > 0) & (distance <= tau_c)


def blend_views(colors: list, weights: list, w_min: float = 1e-4) -> BlendResult:
    """
    Normalized weighted sum of sampled colors.

    Pixels whose total weight is below `w_min` are holes and stay zero.
    """
    colors = np.stack([np.asarray(c, dtype=np.float64) for c in colors])
    weights = np.stack([np.asarray(w, dtype=np.float64) for w in weights])
    total = weights.sum(axis=0)
    holes = total < w_min
    safe = np.where(holes, 1.0, total)
    image = np.einsum("vhw,vhwc->hwc", weights, colors) / safe[..., None]
    image = np.where(holes[..., None], 0.0, image)
    return BlendResult(image=ImageBuffer(image), holes=holes, total_weight=total)


def render_blend(
    depths: dict,
    images: dict,
    masks: dict,
    cameras: dict,
    novel: CameraModel,
    cfg: BlendConfig | None = None,
    view_weights: dict | None = None,
) -> BlendOutcome:
    """
    Full-resolution blend of the source views into the novel camera.

    The appearance-consistency mask is computed from first-pass weights and
    applied in a second pass. `view_weights` rank the source depths inside
    the fusion band. The novel foreground follows the silhouette of the
    source camera nearest the novel one.
    """
    cfg = cfg or BlendConfig()
    names = list(depths)
    fused = fuse_depth_to_novel(
        depths, cameras, novel, radius=cfg.zbuffer_radius, tolerance=cfg.fuse_tolerance, weights=view_weights,
    )
    nearest = min(names, key=lambda n: (float(np.linalg.norm(cameras[n].center - novel.center)), n))
    foreground = novel_foreground(fused, novel, cameras[nearest], masks[nearest])
    rays = novel.pixel_rays()

    samples, first_pass = {}, {}
    for name in names:
        sample = backproject_sample(fused, novel, cameras[name], images[name], depths[name])
        mask, normals = view_mask_and_normals(sample, cameras[name], depths[name], masks[name], cfg)
        samples[name] = sample
        first_pass[name] = visibility_weight(sample, normals, rays, mask, cfg)

    colors = np.stack([samples[n].color for n in names])
    consistent = consistency_mask(colors, np.stack([first_pass[n] for n in names]), cfg.tau_c)
    for index, name in enumerate(names):
        samples[name] = samples[name].with_weight(first_pass[name] * consistent[index])

    blend = blend_views([samples[n].color for n in names], [samples[n].weight for n in names], cfg.w_min)
    logger.debug(
        "Blended %d views: fused depth covers %.1f%%, holes %.1f%%",
        len(names), 100.0 * fused.mask.mean(), 100.0 * (blend.holes & fused.mask).mean(),
    )
    return BlendOutcome(fused_depth=fused, samples=samples, blend=blend, foreground=foreground)


def upsample(image: ImageBuffer, width: int, height: int) -> ImageBuffer:
    """Bicubic resize clamped to [0, 1]."""
    resized = cv2.resize(np.array(image.values), (width, height), interpolation=cv2.INTER_CUBIC)
    if resized.ndim == 2:
        resized = resized[:, :, None]
    return ImageBuffer(np.clip(resized, 0.0, 1.0))


def refine_fuse(low_res: ImageBuffer, blend: BlendResult, foreground: np.ndarray | None = None) -> ImageBuffer:
    """
    Fill blend holes from the upsampled low-resolution rendering.

    Valid blend pixels within 3 px of a hole are feathered toward the
    upsampled image; farther pixels keep the blend value. With a
    `foreground` mask only holes inside it are filled, and everything
    outside it is background (0). A blend without holes and without a
    foreground cut is returned unchanged.

    Args:
        low_res: Decoded low-resolution rendering
        blend: Full-resolution blend with its hole mask
        foreground: Optional novel-view foreground mask

    Returns:
        Full-resolution ImageBuffer
    """
    holes = np.array(blend.holes)
    if foreground is not None:
        foreground = np.asarray(foreground, dtype=bool)
        if foreground.shape != holes.shape:
            raise InvalidArgumentError(f"Foreground is {foreground.shape}, blend is {holes.shape}")
        holes &= foreground
    if not holes.any():
        if foreground is None or foreground.all():
            return blend.image
        return ImageBuffer(np.where(foreground[..., None], blend.image.values, 0.0))

    height, width = blend.image.shape
    coarse = upsample(low_res, width, height).values
    distance = ndimage.distance_transform_edt(~holes)
    keep = np.clip(distance / FEATHER_PX, 0.0, 1.0)[..., None]
    refined = keep * blend.image.values + (1.0 - keep) * coarse
    if foreground is not None:
        refined = np.where(foreground[..., None], refined, 0.0)
    return ImageBuffer(refined)
