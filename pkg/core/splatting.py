"""
Latent Feature Splatting

Pure Python implementation - NO Django imports.
Pixel-aligned Gaussian construction from source views, a tiled software
rasterizer compositing D-channel features front to back, and the decoder
that normalizes, inpaints and reads color back out of the feature image.

The encoder and decoder are deterministic stand-ins for learned networks:
feature channels 0-2 carry the source RGB unchanged, the rest are local
image descriptors; decoding is alpha normalization plus push-pull fill.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from core.errors import InvalidArgumentError
from core.geometry import CameraModel, unproject
from core.imaging import DepthMap, ImageBuffer, frozen_array, luminance


logger = logging.getLogger(__name__)

COVARIANCE_FLOOR = 0.3
MAX_ALPHA = 0.99
CUTOFF_SIGMA = 3.0
NEAR_PLANE = 1e-3
OPACITY_RAMP_PX = 2.0
BASE_FEATURES = 8


@dataclass(frozen=True)
class SplatConfig:
    """Latent dimension, scale multiplier and rasterization settings."""
    feature_dim: int = BASE_FEATURES
    kappa: float = 1.0
    resolution_factor: float = 0.5
    alpha_min: float = 0.05
    tile: int = 16
    workers: int = 1

    def __post_init__(self):
        if self.feature_dim < 3:
            raise InvalidArgumentError(f"feature_dim must be >= 3 (RGB), got {self.feature_dim}")
        if not self.kappa > 0:
            raise InvalidArgumentError(f"kappa must be positive, got {self.kappa}")
        if not 0 < self.resolution_factor <= 1:
            raise InvalidArgumentError(f"resolution_factor must be in (0, 1], got {self.resolution_factor}")
        if not 0 <= self.alpha_min < 1:
            raise InvalidArgumentError(f"alpha_min must be in [0, 1), got {self.alpha_min}")
        if self.tile < 1 or self.workers < 1:
            raise InvalidArgumentError("tile and workers must be >= 1")


@dataclass(frozen=True)
class EncoderOutput:
    """Per-pixel features (H x W x D), isotropic scales (H x W x 3) and opacity (H x W)."""
    features: np.ndarray
    scales: np.ndarray
    opacity: np.ndarray

    def __post_init__(self):
        for name in ("features", "scales", "opacity"):
            object.__setattr__(self, name, frozen_array(getattr(self, name)))
        if np.any(self.opacity < 0) or np.any(self.opacity > 1):
            raise InvalidArgumentError("Opacity must lie in [0, 1]")


@dataclass(frozen=True)
class GaussianCloud:
    """
    Splat set with identity rotations.

    `ids` identify the source pixel of each Gaussian and break depth ties,
    so rendering does not depend on array order.
    """
    positions: np.ndarray
    features: np.ndarray
    scales: np.ndarray
    opacities: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        count = len(positions)
        features = np.asarray(self.features, dtype=np.float64)
        width = features.shape[-1] if features.ndim > 1 else (features.size // count if count else 0)
        features = features.reshape(count, width)
        scales = np.asarray(self.scales, dtype=np.float64).reshape(count, 3)
        opacities = np.asarray(self.opacities, dtype=np.float64).reshape(count)
        ids = np.asarray(self.ids, dtype=np.int64).reshape(count)
        if np.any(opacities < 0) or np.any(opacities > 1):
            raise InvalidArgumentError("Gaussian opacities must lie in [0, 1]")
        if np.any(scales <= 0):
            raise InvalidArgumentError("Gaussian scales must be positive")
        object.__setattr__(self, "positions", frozen_array(positions))
        object.__setattr__(self, "features", frozen_array(features))
        object.__setattr__(self, "scales", frozen_array(scales))
        object.__setattr__(self, "opacities", frozen_array(opacities))
        object.__setattr__(self, "ids", frozen_array(ids, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @classmethod
    def empty(cls, feature_dim: int = BASE_FEATURES) -> "GaussianCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, feature_dim)), np.zeros((0, 3)), np.zeros(0), np.zeros(0))


@dataclass(frozen=True)
class FeatureImage:
    """Accumulated features (H x W x D) and accumulated alpha (H x W)."""
    features: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if features.shape[:2] != alpha.shape:
            raise InvalidArgumentError("Feature and alpha planes differ in size")
        if np.any(alpha < 0) or np.any(alpha > 1):
            raise InvalidArgumentError("Accumulated alpha must lie in [0, 1]")
        object.__setattr__(self, "features", frozen_array(features))
        object.__setattr__(self, "alpha", frozen_array(alpha))

    @property
    def height(self) -> int:
        return self.alpha.shape[0]

    @property
    def width(self) -> int:
        return self.alpha.shape[1]


@dataclass(frozen=True)
class DecodedView:
    """Low-resolution color, the inpainted feature map and the foreground hull it covers."""
    image: ImageBuffer
    features: np.ndarray
    hull: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", frozen_array(self.features))
        object.__setattr__(self, "hull", frozen_array(self.hull, dtype=bool))


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------

def _descriptor_channels(img: ImageBuffer, depth: DepthMap, count: int) -> list[np.ndarray]:
    gray = luminance(img)
    max_depth = depth.depth.max() if depth.mask.any() else 1.0
    channels = [
        np.where(depth.mask, depth.depth / max_depth, 0.0),
        ndimage.sobel(gray, axis=1, mode="nearest") / 8.0,
        ndimage.sobel(gray, axis=0, mode="nearest") / 8.0,
    ]
    radius = 3
    while len(channels) < count:
        channels.append(ndimage.uniform_filter(gray, size=2 * radius + 1, mode="nearest"))
        radius = radius * 2 + 1
    return channels[:count]


def encode_source(
    img: ImageBuffer,
    depth: DepthMap,
    mask: np.ndarray,
    camera: CameraModel,
    cfg: SplatConfig | None = None,
) -> EncoderOutput:
    """
    Per-pixel latent features, Gaussian scales and opacities for one source view.

    Args:
        img: Source RGB image
        depth: Source depth map
        mask: Foreground mask
        camera: Source camera (its focal sets the pixel footprint)
        cfg: Splatting configuration

    Returns:
        EncoderOutput; channels 0-2 are the source RGB bit-exactly
    """
    cfg = cfg or SplatConfig()
    mask = np.asarray(mask, dtype=bool)
    if img.shape != depth.shape or mask.shape != depth.shape:
        raise InvalidArgumentError(
            f"Encoder inputs differ in size: image {img.shape}, depth {depth.shape}, mask {mask.shape}"
        )
    if img.channels != 3:
        raise InvalidArgumentError(f"Encoder needs an RGB image, got {img.channels} channels")

    extra = _descriptor_channels(img, depth, cfg.feature_dim - 3)
    features = np.concatenate([img.values] + [c[:, :, None] for c in extra], axis=-1)

    scale = np.where(depth.mask, cfg.kappa * depth.depth / camera.fx, 0.0)
    scales = np.repeat(scale[:, :, None], 3, axis=-1)

    if mask.all():
        ramp = np.ones(mask.shape)
    else:
        ramp = np.clip(ndimage.distance_transform_edt(mask) / OPACITY_RAMP_PX, 0.0, 1.0)
    opacity = np.where(depth.mask, ramp, 0.0)
    return EncoderOutput(features=features, scales=scales, opacity=opacity)


def lift_to_gaussians(outputs, depths, cameras) -> GaussianCloud:
    """
    One Gaussian per pixel with valid depth and positive opacity, across all source views.

    Args:
        outputs: EncoderOutput per view (sequence, or dict keyed like `depths`)
        depths: DepthMap per view
        cameras: CameraModel per view

    Returns:
        GaussianCloud whose ids are view_index * H * W + flat pixel index
    """
    if isinstance(outputs, dict):
        names = list(outputs)
        outputs, depths, cameras = [outputs[n] for n in names], [depths[n] for n in names], [cameras[n] for n in names]
    parts = []
    id_offset = 0
    feature_dim = outputs[0].features.shape[-1] if outputs else BASE_FEATURES
    for out, depth, camera in zip(outputs, depths, cameras):
        if out.opacity.shape != depth.shape:
            raise InvalidArgumentError("Encoder output and depth map differ in size")
        rows, cols = np.nonzero(depth.mask & (out.opacity > 0))
        if len(rows):
            pixels = np.stack([cols, rows], axis=-1).astype(np.float64)
            parts.append((
                unproject(camera, pixels, depth.depth[rows, cols]),
                out.features[rows, cols],
                out.scales[rows, cols],
                out.opacity[rows, cols],
                id_offset + rows * depth.width + cols,
            ))
        id_offset += depth.height * depth.width
    if not parts:
        return GaussianCloud.empty(feature_dim)
    return GaussianCloud(*(np.concatenate(column) for column in zip(*parts)))


# ---------------------------------------------------------------------------
# Rasterizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectedGaussians:
    """Screen-space splats in front-to-back order."""
    means: np.ndarray
    conics: np.ndarray
    radii: np.ndarray
    opacities: np.ndarray
    features: np.ndarray
    depths: np.ndarray


def project_gaussians(cloud: GaussianCloud, camera: CameraModel) -> ProjectedGaussians:
    """
    Project centers and covariances, drop splats behind the near plane and sort by depth.

    2D covariance is J W diag(s^2) W^T J^T plus a 0.3 px^2 isotropic floor;
    the radius bounds the 3-sigma footprint.
    """
    cam = camera.world_to_camera(cloud.positions) if len(cloud) else np.zeros((0, 3))
    keep = cam[:, 2] > NEAR_PLANE
    cam, ids = cam[keep], cloud.ids[keep]
    order = np.lexsort((ids, cam[:, 2]))
    cam = cam[order]
    scales = cloud.scales[keep][order]
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]

    jacobian = np.zeros((len(z), 2, 3))
    jacobian[:, 0, 0] = camera.fx / z
    jacobian[:, 0, 2] = -camera.fx * x / z ** 2
    jacobian[:, 1, 1] = camera.fy / z
    jacobian[:, 1, 2] = -camera.fy * y / z ** 2
    world_cov = scales[:, :, None] ** 2 * np.eye(3)[None]
    cam_cov = camera.rotation[None] @ world_cov @ camera.rotation.T[None]
    cov2d = jacobian @ cam_cov @ jacobian.transpose(0, 2, 1) + COVARIANCE_FLOOR * np.eye(2)[None]

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    conics = np.stack([c / det, -b / det, a / det], axis=-1)
    mid = 0.5 * (a + c)
    lambda_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radii = np.ceil(CUTOFF_SIGMA * np.sqrt(lambda_max))

    means = np.stack([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy], axis=-1)
    return ProjectedGaussians(
        means=means,
        conics=conics,
        radii=radii,
        opacities=cloud.opacities[keep][order],
        features=cloud.features[keep][order],
        depths=z,
    )


def _footprints(projected: ProjectedGaussians, selected: np.ndarray, bounds: tuple):
    """
    (splat, column, row) triples for every pixel of the tile inside a
    selected splat's bounding square. Splats are grouped by radius so each
    group expands to a regular grid.
    """
    x0, x1, y0, y1 = bounds
    radii = projected.radii[selected].astype(np.int64)
    cx = np.floor(projected.means[selected, 0] + 0.5).astype(np.int64)
    cy = np.floor(projected.means[selected, 1] + 0.5).astype(np.int64)
    splats, cols, rows = [], [], []
    for radius in np.unique(radii):
        members = np.nonzero(radii == radius)[0]
        span_x, span_y = min(2 * radius + 1, x1 - x0), min(2 * radius + 1, y1 - y0)
        gx = np.maximum(cx[members] - radius, x0)[:, None, None] + np.arange(span_x)[None, None, :]
        gy = np.maximum(cy[members] - radius, y0)[:, None, None] + np.arange(span_y)[None, :, None]
        gx, gy = np.broadcast_arrays(gx, gy)
        last_x = np.minimum(cx[members] + radius, x1 - 1)[:, None, None]
        last_y = np.minimum(cy[members] + radius, y1 - 1)[:, None, None]
        inside = (gx <= last_x) & (gy <= last_y)
        splats.append(np.broadcast_to(members[:, None, None], gx.shape)[inside])
        cols.append(gx[inside])
        rows.append(gy[inside])
    return np.concatenate(splats), np.concatenate(cols), np.concatenate(rows)


def _render_tile(projected: ProjectedGaussians, bounds: tuple, selected: np.ndarray):
    """
    Composite the splats of one tile front to back.

    Only (pixel, splat) pairs inside each splat's 3-sigma ellipse are
    evaluated. Pairs are ordered by pixel and then by global depth rank, and
    the transmittance in front of each pair is an exclusive running product
    within its pixel.
    """
    x0, x1, y0, y1 = bounds
    tile_w, tile_h = x1 - x0, y1 - y0
    dim = projected.features.shape[1]
    local, cols, rows = _footprints(projected, selected, bounds)
    splat = selected[local]

    dx = cols - projected.means[splat, 0]
    dy = rows - projected.means[splat, 1]
    ca, cb, cc = projected.conics[splat].T
    q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
    alpha = np.minimum(projected.opacities[splat] * np.exp(-0.5 * q), MAX_ALPHA)
    hit = (q <= CUTOFF_SIGMA ** 2) & (alpha > 0)
    pixel = (rows[hit] - y0) * tile_w + (cols[hit] - x0)
    splat, alpha = splat[hit], alpha[hit]

    order = np.lexsort((splat, pixel))
    pixel, splat, alpha = pixel[order], splat[order], alpha[order]
    log_pass = np.log1p(-alpha)
    before = np.cumsum(log_pass) - log_pass
    first = np.ones(len(pixel), dtype=bool)
    first[1:] = pixel[1:] != pixel[:-1]
    segment = np.cumsum(first) - 1
    starts = np.flatnonzero(first)
    weights = alpha * np.exp(before - before[starts][segment])

    count = tile_w * tile_h
    features = np.stack(
        [np.bincount(pixel, weights=weights * projected.features[splat, c], minlength=count) for c in range(dim)],
        axis=-1,
    ) if dim else np.zeros((count, 0))
    accumulated = np.minimum(np.bincount(pixel, weights=weights, minlength=count), 1.0)
    return features, accumulated


def rasterize_gaussians(
    cloud: GaussianCloud,
    camera: CameraModel,
    width: int | None = None,
    height: int | None = None,
    tile: int = 16,
    workers: int = 1,
) -> FeatureImage:
    """
    Render a Gaussian cloud into a D-channel feature image.

    Splats are binned into square tiles by their 3-sigma bounding box and
    composited per tile in global depth order. Tiles are independent, so
    running them on several threads gives the same bits as running them
    serially.

    Args:
        cloud: Gaussians to render
        camera: Target camera (intrinsics at the render resolution)
        width: Output width, defaults to the camera width
        height: Output height, defaults to the camera height
        tile: Tile edge in pixels
        workers: Thread count for tile rendering

    Returns:
        FeatureImage with accumulated features and alpha
    """
    width = camera.width if width is None else width
    height = camera.height if height is None else height
    dim = cloud.feature_dim
    features = np.zeros((height, width, dim))
    alpha = np.zeros((height, width))
    if len(cloud) == 0:
        return FeatureImage(features, alpha)

    projected = project_gaussians(cloud, camera)
    lo = projected.means - projected.radii[:, None]
    hi = projected.means + projected.radii[:, None]
    jobs = []
    for y0 in range(0, height, tile):
        for x0 in range(0, width, tile):
            x1, y1 = min(x0 + tile, width), min(y0 + tile, height)
            selected = np.nonzero(
                (hi[:, 0] >= x0) & (lo[:, 0] <= x1 - 1) & (hi[:, 1] >= y0) & (lo[:, 1] <= y1 - 1)
            )[0]
            if len(selected):
                jobs.append(((x0, x1, y0, y1), selected))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: _render_tile(projected, *job), jobs))
    else:
        results = [_render_tile(projected, *job) for job in jobs]

    for ((x0, x1, y0, y1), _), (tile_features, tile_alpha) in zip(jobs, results):
        features[y0:y1, x0:x1] = tile_features.reshape(y1 - y0, x1 - x0, dim)
        alpha[y0:y1, x0:x1] = tile_alpha.reshape(y1 - y0, x1 - x0)
    logger.debug("Rasterized %d Gaussians into %d tiles at %dx%d", len(cloud), len(jobs), width, height)
    return FeatureImage(features, alpha)


# ---------------------------------------------------------------------------
# Decoder
# ---------------------------------------------------------------------------

def push_pull_fill(values: np.ndarray, known: np.ndarray) -> np.ndarray:
    """
    Fill unknown pixels from a 2x2 premultiplied pyramid.

    Known pixels are returned unchanged; every filled value is a convex
    combination of known values. Returns zeros when nothing is known.
    """
    values = np.asarray(values, dtype=np.float64)
    squeeze = values.ndim == 2
    if squeeze:
        values = values[:, :, None]
    known = np.asarray(known, dtype=bool)
    if not known.any():
        out = np.zeros_like(values)
        return out[:, :, 0] if squeeze else out
    filled = _push_pull(values * known[:, :, None], known.astype(np.float64))
    out = np.where(known[:, :, None], values, filled)
    return out[:, :, 0] if squeeze else out


def _push_pull(premultiplied: np.ndarray, weight: np.ndarray) -> np.ndarray:
    height, width = weight.shape
    with np.errstate(divide="ignore", invalid="ignore"):
        level = np.where(weight[:, :, None] > 0, premultiplied / weight[:, :, None], 0.0)
    if height == 1 and width == 1:
        return level
    pad_h, pad_w = height % 2, width % 2
    p = np.pad(premultiplied, ((0, pad_h), (0, pad_w), (0, 0)))
    w = np.pad(weight, ((0, pad_h), (0, pad_w)))
    coarse_p = p[0::2, 0::2] + p[1::2, 0::2] + p[0::2, 1::2] + p[1::2, 1::2]
    coarse_w = w[0::2, 0::2] + w[1::2, 0::2] + w[0::2, 1::2] + w[1::2, 1::2]
    coarse = _push_pull(coarse_p, coarse_w)
    pulled = coarse[np.arange(height) // 2][:, np.arange(width) // 2]
    return np.where(weight[:, :, None] > 0, level, pulled)


def foreground_hull(covered: np.ndarray) -> np.ndarray:
    """Coverage mask closed over small gaps and with interior holes filled."""
    if not covered.any():
        return np.zeros_like(covered, dtype=bool)
    pad = 2
    padded = np.pad(covered, pad)
    closed = ndimage.binary_closing(padded, structure=np.ones((3, 3), dtype=bool), iterations=pad)
    return ndimage.binary_fill_holes(closed)[pad:-pad, pad:-pad] | covered


def decode_features(fi: FeatureImage, alpha_min: float = 0.05) -> DecodedView:
    """
    Normalize accumulated features by alpha and inpaint weakly covered pixels.

    Args:
        fi: Rasterized feature image at reduced resolution
        alpha_min: Coverage below which a pixel is treated as a hole

    Returns:
        DecodedView whose image is channels 0-2 of the refined features;
        everything outside the foreground hull is zero
    """
    covered = fi.alpha > alpha_min
    normalized = np.zeros_like(fi.features)
    normalized[covered] = fi.features[covered] / fi.alpha[covered][:, None]
    hull = foreground_hull(covered)
    refined = np.where(hull[:, :, None], push_pull_fill(normalized, covered), 0.0)
    logger.debug(
        "Decoded %dx%d features: %.1f%% covered, %d hull pixels inpainted",
        fi.width, fi.height, 100.0 * covered.mean(), int((hull & ~covered).sum()),
    )
    return DecodedView(image=ImageBuffer(refined[:, :, :3]), features=refined, hull=hull)


def render_latent_view(
    images: dict,
    depths: dict,
    masks: dict,
    cameras: dict,
    novel: CameraModel,
    cfg: SplatConfig | None = None,
) -> tuple[GaussianCloud, FeatureImage, DecodedView]:
    """Encode every source view, lift, rasterize at reduced resolution and decode."""
    cfg = cfg or SplatConfig()
    names = list(depths)
    outputs = {n: encode_source(images[n], depths[n], masks[n], cameras[n], cfg) for n in names}
    cloud = lift_to_gaussians(outputs, depths, {n: cameras[n] for n in names})
    reduced = novel.scaled(cfg.resolution_factor)
    fi = rasterize_gaussians(cloud, reduced, tile=cfg.tile, workers=cfg.workers)
    return cloud, fi, decode_features(fi, cfg.alpha_min)
