"""
Capture Rig and Viewer Geometry

Pure Python implementation - NO Django imports.
Four-camera rig (narrow upper pair cam0/cam1, wide lower pair cam2/cam3)
around a desk display, and the novel-view cameras derived from tracked
eye positions.

World frame: display center at the origin, display normal +z toward the
user, y pointing down.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from core.errors import InvalidArgumentError
from core.geometry import CameraModel, StereoPair
from core.imaging import frozen_array


CAMERA_NAMES = ("cam0", "cam1", "cam2", "cam3")

NOMINAL_EYE_DISTANCE = 1.25
VIRTUAL_USER_SCALE = 0.5
MIN_INTEROCULAR = 0.04
MAX_INTEROCULAR = 0.09

# 27-inch 16:9 panel
DISPLAY_WIDTH = 0.5977
DISPLAY_HEIGHT = 0.3362

VERTICAL_AXIS = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class DisplaySpec:
    """Physical display plane."""
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    width: float = DISPLAY_WIDTH
    height: float = DISPLAY_HEIGHT

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=np.float64)
        length = np.linalg.norm(normal)
        if length == 0:
            raise InvalidArgumentError("Display normal must be non-zero")
        object.__setattr__(self, "center", frozen_array(self.center))
        object.__setattr__(self, "normal", frozen_array(normal / length))

    def signed_distance(self, point: np.ndarray) -> float:
        return float((np.asarray(point, dtype=np.float64) - self.center) @ self.normal)

    def foot_point(self, point: np.ndarray) -> np.ndarray:
        """Orthogonal projection of a point onto the display plane."""
        point = np.asarray(point, dtype=np.float64)
        return point - self.signed_distance(point) * self.normal

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "normal": self.normal.tolist(),
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DisplaySpec":
        return cls(
            center=np.asarray(data.get("center", [0.0, 0.0, 0.0])),
            normal=np.asarray(data.get("normal", [0.0, 0.0, 1.0])),
            width=float(data.get("width", DISPLAY_WIDTH)),
            height=float(data.get("height", DISPLAY_HEIGHT)),
        )


@dataclass(frozen=True)
class RigSpec:
    """Four capture cameras, the display they surround and the capture resolution."""
    cameras: dict
    display: DisplaySpec = field(default_factory=DisplaySpec)
    working_distance: float = NOMINAL_EYE_DISTANCE

    def __post_init__(self):
        missing = [name for name in CAMERA_NAMES if name not in self.cameras]
        if missing:
            raise InvalidArgumentError(f"Rig is missing cameras: {', '.join(missing)}")
        if self.upper_pair.baseline >= self.lower_pair.baseline:
            raise InvalidArgumentError(
                f"Upper baseline {self.upper_pair.baseline:.4f} m must be narrower than "
                f"lower baseline {self.lower_pair.baseline:.4f} m"
            )
        volume_center = self.display.center + self.working_distance * self.display.normal
        for name in CAMERA_NAMES:
            camera = self.cameras[name]
            if camera.world_to_camera(volume_center)[2] <= 0:
                raise InvalidArgumentError(f"Camera {name} does not face the working volume")

    @property
    def upper_pair(self) -> StereoPair:
        return StereoPair.from_cameras(self.cameras["cam0"], self.cameras["cam1"])

    @property
    def lower_pair(self) -> StereoPair:
        return StereoPair.from_cameras(self.cameras["cam2"], self.cameras["cam3"])

    @property
    def resolution(self) -> tuple[int, int]:
        camera = self.cameras["cam0"]
        return camera.width, camera.height

    def to_dict(self) -> dict:
        return {
            "cameras": {name: self.cameras[name].to_dict() for name in CAMERA_NAMES},
            "display": self.display.to_dict(),
            "working_distance": self.working_distance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RigSpec":
        if "cameras" not in data:
            return default_rig(**data.get("default", {}))
        return cls(
            cameras={name: CameraModel.from_dict(data["cameras"][name]) for name in data["cameras"]},
            display=DisplaySpec.from_dict(data.get("display", {})),
            working_distance=float(data.get("working_distance", NOMINAL_EYE_DISTANCE)),
        )


def focal_from_fov(size: int, fov_deg: float) -> float:
    """Focal length in pixels for a horizontal field of view."""
    return (size / 2.0) / math.tan(math.radians(fov_deg) / 2.0)


def default_rig(
    resolution: int = 1024,
    fov_deg: float = 50.0,
    upper_baseline: float = 0.08,
    lower_baseline: float = 0.4,
    upper_height: float = -0.21,
    lower_height: float = 0.0,
) -> RigSpec:
    """
    Desk-scale rig: a narrow pair above the display and a wide pair at its sides.

    All cameras look along the display normal so each pair is rectified by
    construction. Within a pair the reference camera sits on the +x side.

    Args:
        resolution: Square capture resolution in pixels
        fov_deg: Horizontal field of view of every camera
        upper_baseline: cam0-cam1 distance in meters
        lower_baseline: cam2-cam3 distance in meters
        upper_height: y coordinate of the upper pair (negative is above the display center)
        lower_height: y coordinate of the lower pair

    Returns:
        RigSpec
    """
    focal = focal_from_fov(resolution, fov_deg)
    centers = {
        "cam0": (upper_baseline / 2.0, upper_height, 0.0),
        "cam1": (-upper_baseline / 2.0, upper_height, 0.0),
        "cam2": (lower_baseline / 2.0, lower_height, 0.0),
        "cam3": (-lower_baseline / 2.0, lower_height, 0.0),
    }
    cameras = {
        name: CameraModel(
            fx=focal,
            fy=focal,
            cx=(resolution - 1) / 2.0,
            cy=(resolution - 1) / 2.0,
            width=resolution,
            height=resolution,
            rotation=np.eye(3),
            translation=-np.asarray(center),
        )
        for name, center in centers.items()
    }
    return RigSpec(cameras=cameras)


@dataclass(frozen=True)
class EyePose:
    """Tracked 3D eye positions in meters."""
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        left = np.asarray(self.left, dtype=np.float64).reshape(3)
        right = np.asarray(self.right, dtype=np.float64).reshape(3)
        distance = float(np.linalg.norm(left - right))
        if not MIN_INTEROCULAR <= distance <= MAX_INTEROCULAR:
            raise InvalidArgumentError(
                f"Interocular distance {distance:.4f} m outside [{MIN_INTEROCULAR}, {MAX_INTEROCULAR}]"
            )
        object.__setattr__(self, "left", frozen_array(left))
        object.__setattr__(self, "right", frozen_array(right))

    @property
    def midpoint(self) -> np.ndarray:
        return (self.left + self.right) / 2.0

    @classmethod
    def centered(cls, distance: float = NOMINAL_EYE_DISTANCE, interocular: float = 0.063,
                 height: float = -0.1, lateral: float = 0.0) -> "EyePose":
        """Eyes level and symmetric about a point `distance` meters in front of the display."""
        half = interocular / 2.0
        return cls(left=(lateral - half, height, distance), right=(lateral + half, height, distance))

    @classmethod
    def from_dict(cls, data: dict) -> "EyePose":
        return cls(left=np.asarray(data["left"]), right=np.asarray(data["right"]))


@dataclass(frozen=True)
class UserTransform:
    """Similarity x -> scale * R x + t placing the remote user in the local display frame."""
    rotation: np.ndarray
    scale: float
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (np.asarray(points, dtype=np.float64) @ self.rotation.T) + self.translation

    def inverse_apply(self, points: np.ndarray) -> np.ndarray:
        return ((np.asarray(points, dtype=np.float64) - self.translation) / self.scale) @ self.rotation

    @property
    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.scale * self.rotation
        out[:3, 3] = self.translation
        return out

    def camera_in_source_frame(self, camera: CameraModel) -> CameraModel:
        """
        Express a local camera in the remote capture frame.

        Viewing the transformed scene from `camera` yields the same pixels as
        viewing the untransformed scene from the returned camera; depths are
        those of the remote scene.
        """
        return CameraModel(
            fx=camera.fx,
            fy=camera.fy,
            cx=camera.cx,
            cy=camera.cy,
            width=camera.width,
            height=camera.height,
            rotation=camera.rotation @ self.rotation,
            translation=(camera.rotation @ self.translation + camera.translation) / self.scale,
        )


def user_transform(display: DisplaySpec, remote_eyes: EyePose, depth_offset: float = 0.0,
                   scale: float = VIRTUAL_USER_SCALE) -> UserTransform:
    """
    Rotate the remote user 180 degrees about the vertical axis through the
    eye-to-display midpoint, then scale about the (rotated) eye midpoint.

    The rotation carries the eye midpoint onto the display plane; the scale
    keeps it there. `depth_offset` moves the virtual user along the display
    normal afterwards.
    """
    eyes = remote_eyes.midpoint
    if display.signed_distance(eyes) <= 0:
        raise InvalidArgumentError("Eyes must be in front of the display plane")
    pivot = (eyes + display.foot_point(eyes)) / 2.0
    axis = VERTICAL_AXIS - (VERTICAL_AXIS @ display.normal) * display.normal
    axis /= np.linalg.norm(axis)
    rotation = 2.0 * np.outer(axis, axis) - np.eye(3)

    rotated_eyes = rotation @ (eyes - pivot) + pivot
    # x -> s * (R (x - pivot) + pivot - e') + e'
    translation = scale * (pivot - rotation @ pivot) + (1.0 - scale) * rotated_eyes
    translation = translation + depth_offset * display.normal
    return UserTransform(rotation=rotation, scale=scale, translation=translation)


@dataclass(frozen=True)
class NovelViews:
    """Per-eye cameras in the local frame and the same cameras in the remote capture frame."""
    left_local: CameraModel
    right_local: CameraModel
    left: CameraModel
    right: CameraModel
    transform: UserTransform


def novel_view_from_eyes(
    rig: RigSpec,
    eyes: EyePose,
    width: int = 1024,
    height: int = 1024,
    fov_deg: float = 30.0,
    remote_eyes: EyePose | None = None,
    depth_offset: float = 0.0,
) -> NovelViews:
    """
    Build the two eye cameras looking at the display center.

    Args:
        rig: Capture rig (provides the display plane)
        eyes: Local viewer's tracked eyes
        width: Novel image width
        height: Novel image height
        fov_deg: Horizontal field of view of the eye cameras
        remote_eyes: Remote user's eyes; defaults to a user at the same pose
        depth_offset: Virtual-user offset along the display normal (meters)

    Returns:
        NovelViews with local and remote-frame cameras plus the user transform
    """
    for eye in (eyes.left, eyes.right):
        if rig.display.signed_distance(eye) <= 0:
            raise InvalidArgumentError("Eyes must be in front of the display plane")
    transform = user_transform(rig.display, remote_eyes or eyes, depth_offset=depth_offset)
    focal = focal_from_fov(width, fov_deg)
    target = rig.display.center
    left_local = CameraModel.look_at(eyes.left, target, width, height, focal)
    right_local = CameraModel.look_at(eyes.right, target, width, height, focal)
    return NovelViews(
        left_local=left_local,
        right_local=right_local,
        left=transform.camera_in_source_frame(left_local),
        right=transform.camera_in_source_frame(right_local),
        transform=transform,
    )
