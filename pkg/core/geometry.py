"""
Camera Geometry

Pure Python implementation - NO Django imports.
Pinhole cameras, rectified stereo pairs and the projection / reprojection
operations shared by every stage of the synthesis pipeline.

Conventions: camera frame x right, y down, z forward; rotation and
translation map world to camera; pixel (row i, col j) has its center at
(u=j, v=i).
"""
from dataclasses import dataclass, field

import numpy as np

from core.errors import InvalidArgumentError
from core.imaging import DepthMap, DisparityMap, frozen_array


ROTATION_TOLERANCE = 1e-9
RECTIFICATION_TOLERANCE = 1e-6
DEFAULT_MIN_DISPARITY = 0.1


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus world-to-camera pose."""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=np.float64)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise InvalidArgumentError("Rotation must be 3x3 and translation a 3-vector")
        if not np.allclose(rotation @ rotation.T, np.eye(3), rtol=0.0, atol=ROTATION_TOLERANCE):
            raise InvalidArgumentError("Rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > ROTATION_TOLERANCE:
            raise InvalidArgumentError("Rotation determinant must be +1")
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidArgumentError(f"Focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise InvalidArgumentError(f"Image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise InvalidArgumentError(
                f"Principal point ({self.cx}, {self.cy}) lies outside the {self.width}x{self.height} image"
            )
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "rotation", frozen_array(rotation))
        object.__setattr__(self, "translation", frozen_array(translation))

    @property
    def center(self) -> np.ndarray:
        """Optical center in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.translation) @ self.rotation

    def pixel_rays(self) -> np.ndarray:
        """Unit world-space viewing directions through every pixel center, H x W x 3."""
        v, u = np.mgrid[0:self.height, 0:self.width].astype(np.float64)
        directions = np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)
        directions = directions @ self.rotation
        return directions / np.linalg.norm(directions, axis=-1, keepdims=True)

    def scaled(self, factor: float) -> "CameraModel":
        """Same pose with the image resampled by `factor` (pixel-center convention preserved)."""
        width = max(1, int(round(self.width * factor)))
        height = max(1, int(round(self.height * factor)))
        return CameraModel(
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=(self.cx + 0.5) * factor - 0.5,
            cy=(self.cy + 0.5) * factor - 0.5,
            width=width,
            height=height,
            rotation=self.rotation,
            translation=self.translation,
        )

    @classmethod
    def look_at(
        cls,
        eye,
        target,
        width: int,
        height: int,
        focal: float,
        down=(0.0, 1.0, 0.0),
    ) -> "CameraModel":
        """
        Build a camera at `eye` looking at `target`, principal point at the image center.

        Args:
            eye: Camera center in world coordinates
            target: Point the optical axis passes through
            width: Image width in pixels
            height: Image height in pixels
            focal: Focal length in pixels (fx = fy)
            down: World direction that should map to image-down

        Returns:
            CameraModel
        """
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        norm = np.linalg.norm(forward)
        if norm == 0:
            raise InvalidArgumentError("Camera eye and target coincide")
        forward /= norm
        right = np.cross(np.asarray(down, dtype=np.float64), forward)
        if np.linalg.norm(right) < 1e-12:
            raise InvalidArgumentError("Viewing direction is parallel to the down vector")
        right /= np.linalg.norm(right)
        down_axis = np.cross(forward, right)
        rotation = np.stack([right, down_axis, forward])
        return cls(
            fx=focal,
            fy=focal,
            cx=(width - 1) / 2.0,
            cy=(height - 1) / 2.0,
            width=width,
            height=height,
            rotation=rotation,
            translation=-rotation @ eye,
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CameraModel":
        return cls(
            fx=data["fx"],
            fy=data.get("fy", data["fx"]),
            cx=data["cx"],
            cy=data["cy"],
            width=data["width"],
            height=data["height"],
            rotation=np.asarray(data.get("rotation", np.eye(3))),
            translation=np.asarray(data.get("translation", np.zeros(3))),
        )


def verify_rectified(reference: CameraModel, target: CameraModel, tolerance: float = RECTIFICATION_TOLERANCE) -> bool:
    """
    Check that a camera pair is rectified with the target on the reference's -x side.

    Epipolar lines are horizontal when both cameras share rotation and
    intrinsics and the target center is offset only along the reference x-axis.
    """
    if (reference.width, reference.height) != (target.width, target.height):
        return False
    if not np.allclose(reference.rotation, target.rotation, rtol=0.0, atol=ROTATION_TOLERANCE):
        return False
    if not np.allclose(
        [reference.fx, reference.fy, reference.cx, reference.cy],
        [target.fx, target.fy, target.cx, target.cy],
        rtol=0.0,
        atol=tolerance,
    ):
        return False
    offset = reference.world_to_camera(target.center)
    baseline = -offset[0]
    if baseline <= 0:
        return False
    return bool(abs(offset[1]) <= tolerance * baseline and abs(offset[2]) <= tolerance * baseline)


@dataclass(frozen=True)
class StereoPair:
    """
    Rectified stereo pair.

    A reference pixel (u, v) matches target pixel (u + d, v) with d >= 0;
    the target camera therefore sits `baseline` meters along the reference -x axis.
    """
    reference: CameraModel
    target: CameraModel
    baseline: float
    focal: float

    def __post_init__(self):
        if not self.baseline > 0:
            raise InvalidArgumentError(f"Baseline must be positive, got {self.baseline}")
        if not verify_rectified(self.reference, self.target):
            raise InvalidArgumentError("Camera pair is not rectified")
        measured = float(np.linalg.norm(self.reference.center - self.target.center))
        if abs(measured - self.baseline) > RECTIFICATION_TOLERANCE * max(1.0, measured):
            raise InvalidArgumentError(f"Declared baseline {self.baseline} differs from camera offset {measured}")
        if abs(self.focal - self.reference.fx) > RECTIFICATION_TOLERANCE:
            raise InvalidArgumentError("Rectified focal differs from the reference camera focal")

    @classmethod
    def from_cameras(cls, reference: CameraModel, target: CameraModel) -> "StereoPair":
        baseline = float(np.linalg.norm(reference.center - target.center))
        return cls(reference=reference, target=target, baseline=baseline, focal=reference.fx)

    @property
    def width(self) -> int:
        return self.reference.width

    @property
    def height(self) -> int:
        return self.reference.height


@dataclass(frozen=True)
class PointSet:
    """World points tagged with the flat index of the pixel they came from."""
    positions: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if len(positions) != len(indices):
            raise InvalidArgumentError("Point positions and indices differ in length")
        object.__setattr__(self, "positions", frozen_array(positions))
        object.__setattr__(self, "indices", frozen_array(indices, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.indices)

    @classmethod
    def concatenate(cls, point_sets: list["PointSet"]) -> "PointSet":
        if not point_sets:
            return cls(np.zeros((0, 3)), np.zeros(0, dtype=np.int64))
        return cls(
            np.concatenate([p.positions for p in point_sets]),
            np.concatenate([p.indices for p in point_sets]),
        )

    def offset(self, amount: int) -> "PointSet":
        """Shift source indices so sets from several views stay distinct."""
        return PointSet(self.positions, self.indices + amount)


@dataclass(frozen=True)
class NormalMap:
    """Per-pixel unit normals in the camera frame, oriented toward the camera."""
    normals: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "normals", frozen_array(self.normals))
        object.__setattr__(self, "mask", frozen_array(self.mask, dtype=bool))


def project(camera: CameraModel, point: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Project world points into a camera.

    Args:
        camera: Target camera
        point: World point(s), shape (..., 3)

    Returns:
        Tuple of (pixels (..., 2), camera-space depth (...)). Depth may be
        <= 0 for points behind the camera; such results are flagged by the
        sign of the depth, not rejected.
    """
    cam = camera.world_to_camera(point)
    z = cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(z != 0, z, np.nan)
        u = camera.fx * cam[..., 0] / safe + camera.cx
        v = camera.fy * cam[..., 1] / safe + camera.cy
    return np.stack([u, v], axis=-1), z


def unproject(camera: CameraModel, pixel: np.ndarray, depth) -> np.ndarray:
    """
    Lift pixel(s) at camera-space depth(s) to world coordinates.

    Args:
        camera: Source camera
        pixel: Pixel coordinate(s), shape (..., 2)
        depth: Depth(s) in meters, shape (...)

    Returns:
        World point(s), shape (..., 3)
    """
    pixel = np.asarray(pixel, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise InvalidArgumentError("Unprojection depth must be positive")
    x = (pixel[..., 0] - camera.cx) / camera.fx * depth
    y = (pixel[..., 1] - camera.cy) / camera.fy * depth
    return camera.camera_to_world(np.stack([x, y, np.broadcast_to(depth, x.shape)], axis=-1))


def disparity_to_depth(pair: StereoPair, disp: DisparityMap, min_disparity: float = DEFAULT_MIN_DISPARITY) -> DepthMap:
    """Convert disparity to depth with z = f * B / d; disparities at or below `min_disparity` become invalid."""
    valid = disp.mask & (disp.disparity > min_disparity)
    depth = np.zeros(disp.shape)
    depth[valid] = pair.focal * pair.baseline / disp.disparity[valid]
    return DepthMap(depth, valid)


def depth_to_disparity(pair: StereoPair, depth: DepthMap) -> DisparityMap:
    """Convert depth to disparity with d = f * B / z on valid pixels."""
    disparity = np.zeros(depth.shape)
    disparity[depth.mask] = pair.focal * pair.baseline / depth.depth[depth.mask]
    return DisparityMap(disparity, depth.mask)


def depth_to_points(camera: CameraModel, depth: DepthMap) -> PointSet:
    """Lift every valid depth pixel to a world point, in row-major pixel order."""
    rows, cols = np.nonzero(depth.mask)
    if len(rows) == 0:
        return PointSet(np.zeros((0, 3)), np.zeros(0, dtype=np.int64))
    pixels = np.stack([cols, rows], axis=-1).astype(np.float64)
    positions = unproject(camera, pixels, depth.depth[rows, cols])
    return PointSet(positions, rows * depth.width + cols)


def points_zbuffer(
    points: PointSet,
    target: CameraModel,
    radius: int = 1,
    tolerance: float = 0.0,
    weights: np.ndarray | None = None,
) -> DepthMap:
    """
    Splat points into a target view keeping the nearest depth per pixel.

    Each point covers the (2r+1) x (2r+1) square around its nearest pixel.
    Ties in depth go to the lowest source index, which makes the result
    independent of input ordering. With a positive `tolerance`, every splat
    within `tolerance` meters behind the nearest one is averaged, weighted by
    `weights` (one per point, default 1).

    Args:
        points: World points with source indices
        target: Camera to render into
        radius: Splat radius in pixels
        tolerance: Depth band behind the nearest splat that is averaged
        weights: Optional positive per-point weights for the band average

    Returns:
        DepthMap of the target view; pixels without points are invalid
    """
    depth = np.zeros((target.height, target.width))
    if len(points) == 0:
        return DepthMap(depth)
    if tolerance < 0:
        raise InvalidArgumentError(f"Fusion tolerance must be >= 0, got {tolerance}")
    weights = np.ones(len(points)) if weights is None else np.asarray(weights, dtype=np.float64).reshape(len(points))
    if np.any(weights <= 0):
        raise InvalidArgumentError("Fusion weights must be positive")

    pixels, z = project(target, points.positions)
    front = np.isfinite(pixels).all(axis=-1) & (z > 0)
    pixels, z, indices, weights = pixels[front], z[front], points.indices[front], weights[front]
    u0 = np.floor(pixels[:, 0] + 0.5).astype(np.int64)
    v0 = np.floor(pixels[:, 1] + 0.5).astype(np.int64)

    offsets = np.arange(-radius, radius + 1)
    du, dv = np.meshgrid(offsets, offsets)
    uu = (u0[:, None] + du.ravel()[None, :]).ravel()
    vv = (v0[:, None] + dv.ravel()[None, :]).ravel()
    zz = np.repeat(z, du.size)
    ii = np.repeat(indices, du.size)
    ww = np.repeat(weights, du.size)

    inside = (uu >= 0) & (uu < target.width) & (vv >= 0) & (vv < target.height)
    flat, zz, ii, ww = vv[inside] * target.width + uu[inside], zz[inside], ii[inside], ww[inside]
    order = np.lexsort((ii, zz))
    flat, zz, ww = flat[order], zz[order], ww[order]
    unique_flat, first = np.unique(flat, return_index=True)
    if tolerance == 0:
        depth.flat[unique_flat] = zz[first]
        return DepthMap(depth)

    nearest = np.zeros(depth.size)
    nearest[unique_flat] = zz[first]
    band = zz <= nearest[flat] + tolerance
    # Sums follow the canonical (depth, index) order
    weight_sum = np.bincount(flat[band], weights=ww[band], minlength=depth.size)
    depth_sum = np.bincount(flat[band], weights=(ww * zz)[band], minlength=depth.size)
    depth.flat[unique_flat] = depth_sum[unique_flat] / weight_sum[unique_flat]
    return DepthMap(depth)


def normals_from_depth(camera: CameraModel, depth: DepthMap) -> NormalMap:
    """
    Estimate per-pixel surface normals by central differences.

    The two tangents are differences of the neighboring camera-space points;
    their cross product is normalized and flipped to face the camera.
    Pixels with any invalid 4-neighbor, and border pixels, are invalid.
    """
    height, width = depth.shape
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    z = depth.depth
    points = np.stack([(u - camera.cx) / camera.fx * z, (v - camera.cy) / camera.fy * z, z], axis=-1)

    normals = np.zeros((height, width, 3))
    mask = np.zeros((height, width), dtype=bool)
    if height < 3 or width < 3:
        return NormalMap(normals, mask)

    tangent_u = points[1:-1, 2:] - points[1:-1, :-2]
    tangent_v = points[2:, 1:-1] - points[:-2, 1:-1]
    cross = np.cross(tangent_u, tangent_v)
    length = np.linalg.norm(cross, axis=-1)

    m = depth.mask
    valid = m[1:-1, 1:-1] & m[1:-1, 2:] & m[1:-1, :-2] & m[2:, 1:-1] & m[:-2, 1:-1] & (length > 0)
    unit = np.zeros_like(cross)
    unit[valid] = cross[valid] / length[valid][:, None]
    facing = np.einsum("hwc,hwc->hw", unit, points[1:-1, 1:-1])
    unit[facing > 0] *= -1.0

    normals[1:-1, 1:-1] = unit
    mask[1:-1, 1:-1] = valid
    return NormalMap(normals, mask)
