"""
Image, depth and disparity containers

Pure Python implementation - NO Django imports.
All containers are immutable after construction: arrays are copied and
marked read-only so they can be shared across worker threads.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from core.errors import InvalidArgumentError


INVALID_DISPARITY = -1.0

# Rec. 709 luma weights, applied to linear-light RGB
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])


def frozen_array(array: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Copy an array into the requested dtype and mark it read-only."""
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ImageBuffer:
    """Row-major H x W x C float image (linear light in [0, 1] for color)."""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3:
            raise InvalidArgumentError(f"Image must be H x W x C, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("Image contains NaN or Inf values")
        object.__setattr__(self, "values", frozen_array(values))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[:2]

    @classmethod
    def zeros(cls, width: int, height: int, channels: int = 3) -> "ImageBuffer":
        return cls(np.zeros((height, width, channels)))


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel camera-space depth in meters; 0 encodes invalid and the mask is authoritative."""
    depth: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float64)
        if depth.ndim != 2:
            raise InvalidArgumentError(f"Depth map must be H x W, got shape {depth.shape}")
        if not np.all(np.isfinite(depth)):
            raise InvalidArgumentError("Depth map contains NaN or Inf values")
        mask = depth > 0 if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != depth.shape:
            raise InvalidArgumentError("Depth mask and depth map differ in shape")
        if np.any(depth[mask] <= 0) or np.any(depth[~mask] != 0):
            raise InvalidArgumentError("Depth map and validity mask disagree (depth == 0 must mean invalid)")
        object.__setattr__(self, "depth", frozen_array(depth))
        object.__setattr__(self, "mask", frozen_array(mask, dtype=bool))

    @classmethod
    def from_array(cls, depth: np.ndarray, mask: np.ndarray | None = None) -> "DepthMap":
        """Build a depth map, zeroing non-finite, non-positive and masked-out entries."""
        depth = np.array(depth, dtype=np.float64, copy=True)
        valid = np.isfinite(depth) & (depth > 0)
        if mask is not None:
            valid &= np.asarray(mask, dtype=bool)
        depth[~valid] = 0.0
        return cls(depth, valid)

    @classmethod
    def empty(cls, width: int, height: int) -> "DepthMap":
        return cls(np.zeros((height, width)))

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


@dataclass(frozen=True)
class DisparityMap:
    """Per-pixel disparity in pixels; INVALID_DISPARITY marks invalid pixels, the mask is authoritative."""
    disparity: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        disparity = np.asarray(self.disparity, dtype=np.float64)
        if disparity.ndim != 2:
            raise InvalidArgumentError(f"Disparity map must be H x W, got shape {disparity.shape}")
        if not np.all(np.isfinite(disparity)):
            raise InvalidArgumentError("Disparity map contains NaN or Inf values")
        mask = disparity >= 0 if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != disparity.shape:
            raise InvalidArgumentError("Disparity mask and disparity map differ in shape")
        if np.any(disparity[mask] < 0):
            raise InvalidArgumentError("Valid disparities must be non-negative")
        disparity = np.where(mask, disparity, INVALID_DISPARITY)
        object.__setattr__(self, "disparity", frozen_array(disparity))
        object.__setattr__(self, "mask", frozen_array(mask, dtype=bool))

    @classmethod
    def from_array(cls, disparity: np.ndarray, mask: np.ndarray | None = None) -> "DisparityMap":
        """Build a disparity map, invalidating non-finite and negative entries."""
        disparity = np.array(disparity, dtype=np.float64, copy=True)
        valid = np.isfinite(disparity) & (disparity >= 0)
        if mask is not None:
            valid &= np.asarray(mask, dtype=bool)
        disparity[~valid] = INVALID_DISPARITY
        return cls(disparity, valid)

    @classmethod
    def empty(cls, width: int, height: int) -> "DisparityMap":
        return cls(np.full((height, width), INVALID_DISPARITY), np.zeros((height, width), dtype=bool))

    @property
    def height(self) -> int:
        return self.disparity.shape[0]

    @property
    def width(self) -> int:
        return self.disparity.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.disparity.shape

    def within_range(self, d_max: float) -> bool:
        """Check that every valid disparity lies in [0, d_max]."""
        valid = self.disparity[self.mask]
        return bool(np.all((valid >= 0) & (valid <= d_max)))


@dataclass(frozen=True)
class ColorCorrection:
    """Per-camera gamma exponent followed by a 3x3 color correction matrix."""
    gamma: float = 1.0
    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidArgumentError(f"Gamma must be positive, got {self.gamma}")
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.shape != (3, 3):
            raise InvalidArgumentError(f"Color matrix must be 3x3, got shape {matrix.shape}")
        if abs(np.linalg.det(matrix)) <= 1e-12:
            raise InvalidArgumentError("Color matrix is singular")
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "matrix", frozen_array(matrix))


def apply_color_correction(cc: ColorCorrection, img: ImageBuffer) -> ImageBuffer:
    """
    Linearize with the gamma exponent, then apply the color matrix.

    Args:
        cc: Calibrated color correction for the capturing camera
        img: 3-channel image

    Returns:
        Corrected image clamped to [0, 1]
    """
    if img.channels != 3:
        raise InvalidArgumentError(f"Color correction needs a 3-channel image, got {img.channels}")
    linear = np.power(img.values, cc.gamma)
    corrected = np.einsum("ij,hwj->hwi", cc.matrix, linear)
    return ImageBuffer(np.clip(corrected, 0.0, 1.0))


def luminance(img: ImageBuffer) -> np.ndarray:
    """Return the H x W luma of a color image (or the single channel of a gray one)."""
    if img.channels == 1:
        return np.array(img.values[:, :, 0])
    return img.values[:, :, :3] @ LUMA_WEIGHTS


def sample_bilinear(values: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Bilinearly sample an H x W or H x W x C array at pixel coordinates with border clamp.

    Args:
        values: Source array
        u: Column coordinates (any shape)
        v: Row coordinates (same shape as u)

    Returns:
        Samples of shape u.shape (+ (C,) for multi-channel input)
    """
    coords = np.stack([np.ravel(v), np.ravel(u)])
    if values.ndim == 2:
        out = ndimage.map_coordinates(values, coords, order=1, mode="nearest")
        return out.reshape(np.shape(u))
    channels = [
        ndimage.map_coordinates(values[:, :, c], coords, order=1, mode="nearest")
        for c in range(values.shape[2])
    ]
    return np.stack(channels, axis=-1).reshape(np.shape(u) + (values.shape[2],))


def bilinear_taps_valid(mask: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Check that every bilinear tap with nonzero weight lands on a valid, in-bounds pixel.

    Args:
        mask: H x W validity mask
        u: Column coordinates
        v: Row coordinates

    Returns:
        Boolean array of shape u.shape
    """
    height, width = mask.shape
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    inside = (u >= 0) & (u <= width - 1) & (v >= 0) & (v <= height - 1)
    u0 = np.clip(np.floor(u), 0, width - 1).astype(np.int64)
    v0 = np.clip(np.floor(v), 0, height - 1).astype(np.int64)
    fu = np.where(inside, u - u0, 0.0)
    fv = np.where(inside, v - v0, 0.0)
    u1 = np.minimum(u0 + 1, width - 1)
    v1 = np.minimum(v0 + 1, height - 1)

    valid = inside & mask[v0, u0]
    valid &= (fu == 0) | mask[v0, u1]
    valid &= (fv == 0) | mask[v1, u0]
    valid &= (fu == 0) | (fv == 0) | mask[v1, u1]
    return valid
