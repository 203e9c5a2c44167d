"""
Synthetic Scene Renderer

Pure Python implementation - NO Django imports.
Analytic ray casting of textured planes, spheres, boxes and triangle meshes
under directional + ambient lighting. Renders are the ground truth for the
stereo, splatting and blending tests: exact depth, exact foreground mask and
view-independent (solid) albedo textures so every camera sees the same
surface colors.
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from core.errors import ConfigError, InvalidArgumentError
from core.geometry import CameraModel
from core.imaging import DepthMap, ImageBuffer, frozen_array


logger = logging.getLogger(__name__)

RAY_EPSILON = 1e-9

_HASH_PRIMES = (np.uint64(73856093), np.uint64(19349663), np.uint64(83492791))
_MIX_1 = np.uint64(0xFF51AFD7ED558CCD)
_MIX_2 = np.uint64(0xC4CEB9FE1A85EC53)


# ---------------------------------------------------------------------------
# Materials
# ---------------------------------------------------------------------------

def _hash_unit(ix: np.ndarray, iy: np.ndarray, iz: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic lattice hash mapped to [0, 1)."""
    h = (ix.astype(np.int64).astype(np.uint64) * _HASH_PRIMES[0])
    h ^= iy.astype(np.int64).astype(np.uint64) * _HASH_PRIMES[1]
    h ^= iz.astype(np.int64).astype(np.uint64) * _HASH_PRIMES[2]
    h ^= np.uint64(seed & 0xFFFFFFFF) * np.uint64(2654435761)
    h ^= h >> np.uint64(33)
    h *= _MIX_1
    h ^= h >> np.uint64(33)
    h *= _MIX_2
    h ^= h >> np.uint64(33)
    return (h >> np.uint64(11)).astype(np.float64) / float(2 ** 53)


def _value_noise(points: np.ndarray, cell: float, seed: int) -> np.ndarray:
    """Trilinearly interpolated lattice noise with smoothstep weights."""
    scaled = points / cell
    base = np.floor(scaled)
    frac = scaled - base
    smooth = frac * frac * (3.0 - 2.0 * frac)
    out = np.zeros(len(points))
    for corner in range(8):
        offset = np.array([(corner >> 0) & 1, (corner >> 1) & 1, (corner >> 2) & 1])
        lattice = base + offset
        weight = np.prod(np.where(offset == 1, smooth, 1.0 - smooth), axis=-1)
        out += weight * _hash_unit(lattice[:, 0], lattice[:, 1], lattice[:, 2], seed)
    return out


@dataclass(frozen=True)
class TextureSpec:
    """Procedural albedo evaluated at world positions."""
    kind: str = "noise"
    color: tuple = (0.8, 0.7, 0.6)
    contrast: float = 0.6
    cell: float = 0.03
    octaves: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "checker", "noise"):
            raise InvalidArgumentError(f"Unknown texture kind '{self.kind}'")
        if not self.cell > 0:
            raise InvalidArgumentError(f"Texture cell size must be positive, got {self.cell}")
        object.__setattr__(self, "color", tuple(float(c) for c in self.color))

    def albedo(self, points: np.ndarray) -> np.ndarray:
        color = np.asarray(self.color)
        if self.kind == "constant" or len(points) == 0:
            return np.broadcast_to(color, (len(points), 3)).copy()
        if self.kind == "checker":
            parity = np.floor(points / self.cell).astype(np.int64).sum(axis=-1) % 2
            return color[None, :] * np.where(parity[:, None] == 1, 1.0 - self.contrast, 1.0)

        channels = []
        for c in range(3):
            value, amplitude, total = np.zeros(len(points)), 1.0, 0.0
            for octave in range(self.octaves):
                value += amplitude * _value_noise(points, self.cell / 2 ** octave, self.seed * 7 + c * 131 + octave)
                total += amplitude
                amplitude *= 0.5
            channels.append(value / total)
        noise = np.stack(channels, axis=-1)
        return color[None, :] * (1.0 - self.contrast * (1.0 - noise))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "color": list(self.color),
            "contrast": self.contrast,
            "cell": self.cell,
            "octaves": self.octaves,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Material:
    texture: TextureSpec = field(default_factory=TextureSpec)
    specular: float = 0.0
    shininess: float = 32.0

    def to_dict(self) -> dict:
        return {"texture": self.texture.to_dict(), "specular": self.specular, "shininess": self.shininess}

    @classmethod
    def from_dict(cls, data: dict) -> "Material":
        return cls(
            texture=TextureSpec(**data.get("texture", {})),
            specular=float(data.get("specular", 0.0)),
            shininess=float(data.get("shininess", 32.0)),
        )


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Plane:
    """Finite rectangle; `u_axis` is one in-plane edge direction."""
    center: np.ndarray
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))
    u_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    width: float = 1.0
    height: float = 1.0
    material: Material = field(default_factory=Material)
    foreground: bool = True

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=np.float64)
        normal = normal / np.linalg.norm(normal)
        u_axis = np.asarray(self.u_axis, dtype=np.float64)
        u_axis = u_axis - (u_axis @ normal) * normal
        if np.linalg.norm(u_axis) < 1e-12:
            raise InvalidArgumentError("Plane u_axis is parallel to its normal")
        object.__setattr__(self, "center", frozen_array(self.center))
        object.__setattr__(self, "normal", frozen_array(normal))
        object.__setattr__(self, "u_axis", frozen_array(u_axis / np.linalg.norm(u_axis)))

    @property
    def v_axis(self) -> np.ndarray:
        return np.cross(self.normal, self.u_axis)

    def intersect(self, origins: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        denom = directions @ self.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((self.center - origins) @ self.normal) / denom
        t = np.where(np.abs(denom) > 1e-12, t, np.inf)
        hits = origins + np.where(np.isfinite(t), t, 0.0)[:, None] * directions
        local = hits - self.center
        inside = (np.abs(local @ self.u_axis) <= self.width / 2) & (np.abs(local @ self.v_axis) <= self.height / 2)
        t = np.where(inside & (t > RAY_EPSILON), t, np.inf)
        return t, np.broadcast_to(self.normal, directions.shape)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        corners = np.array([
            self.center + su * self.width / 2 * self.u_axis + sv * self.height / 2 * self.v_axis
            for su in (-1, 1) for sv in (-1, 1)
        ])
        return corners.min(axis=0), corners.max(axis=0)

    def to_dict(self) -> dict:
        return {
            "type": "plane",
            "center": self.center.tolist(),
            "normal": self.normal.tolist(),
            "u_axis": self.u_axis.tolist(),
            "width": self.width,
            "height": self.height,
            "material": self.material.to_dict(),
            "foreground": self.foreground,
        }


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    material: Material = field(default_factory=Material)
    foreground: bool = True

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidArgumentError(f"Sphere radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", frozen_array(self.center))

    def intersect(self, origins: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        oc = origins - self.center
        a = np.einsum("ij,ij->i", directions, directions)
        b = 2.0 * np.einsum("ij,ij->i", oc, directions)
        c = np.einsum("ij,ij->i", oc, oc) - self.radius ** 2
        disc = b * b - 4.0 * a * c
        root = np.sqrt(np.maximum(disc, 0.0))
        near = (-b - root) / (2.0 * a)
        far = (-b + root) / (2.0 * a)
        t = np.where(near > RAY_EPSILON, near, np.where(far > RAY_EPSILON, far, np.inf))
        t = np.where(disc >= 0, t, np.inf)
        hits = origins + np.where(np.isfinite(t), t, 0.0)[:, None] * directions
        return t, (hits - self.center) / self.radius

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.center - self.radius, self.center + self.radius

    def to_dict(self) -> dict:
        return {
            "type": "sphere",
            "center": self.center.tolist(),
            "radius": self.radius,
            "material": self.material.to_dict(),
            "foreground": self.foreground,
        }


@dataclass(frozen=True)
class Box:
    """Axis-aligned box."""
    center: np.ndarray
    size: np.ndarray
    material: Material = field(default_factory=Material)
    foreground: bool = True

    def __post_init__(self):
        size = np.asarray(self.size, dtype=np.float64)
        if size.shape != (3,) or np.any(size <= 0):
            raise InvalidArgumentError(f"Box size must be three positive extents, got {self.size}")
        object.__setattr__(self, "center", frozen_array(self.center))
        object.__setattr__(self, "size", frozen_array(size))

    def intersect(self, origins: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.bounds()
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / directions
            t0 = (lo - origins) * inv
            t1 = (hi - origins) * inv
        t_near = np.nan_to_num(np.minimum(t0, t1), nan=-np.inf)
        t_far = np.nan_to_num(np.maximum(t0, t1), nan=np.inf)
        enter = t_near.max(axis=1)
        leave = t_far.min(axis=1)
        hit = (enter <= leave) & (leave > RAY_EPSILON)
        t = np.where(hit, np.where(enter > RAY_EPSILON, enter, leave), np.inf)

        axis = np.where(enter > RAY_EPSILON, t_near.argmax(axis=1), t_far.argmin(axis=1))
        normals = np.zeros_like(directions)
        rows = np.arange(len(directions))
        normals[rows, axis] = -np.sign(directions[rows, axis])
        return t, normals

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.center - self.size / 2, self.center + self.size / 2

    def to_dict(self) -> dict:
        return {
            "type": "box",
            "center": self.center.tolist(),
            "size": self.size.tolist(),
            "material": self.material.to_dict(),
            "foreground": self.foreground,
        }


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    material: Material = field(default_factory=Material)
    foreground: bool = True

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(faces) and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise InvalidArgumentError("Mesh face references a missing vertex")
        object.__setattr__(self, "vertices", frozen_array(vertices))
        object.__setattr__(self, "faces", frozen_array(faces, dtype=np.int64))

    def intersect(self, origins: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # Moller-Trumbore, one face at a time
        best = np.full(len(directions), np.inf)
        normals = np.zeros_like(directions)
        for a, b, c in self.vertices[self.faces]:
            edge1, edge2 = b - a, c - a
            pvec = np.cross(directions, edge2)
            det = pvec @ edge1
            usable = np.abs(det) > 1e-12
            inv_det = np.where(usable, 1.0 / np.where(usable, det, 1.0), 0.0)
            tvec = origins - a
            u = np.einsum("ij,ij->i", tvec, pvec) * inv_det
            qvec = np.cross(tvec, edge1)
            v = np.einsum("ij,ij->i", directions, qvec) * inv_det
            t = (qvec @ edge2) * inv_det
            hit = usable & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > RAY_EPSILON) & (t < best)
            best[hit] = t[hit]
            face_normal = np.cross(edge1, edge2)
            normals[hit] = face_normal / np.linalg.norm(face_normal)
        return best, normals

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.faces)] if len(self.faces) else self.vertices
        return used.min(axis=0), used.max(axis=0)

    def to_dict(self) -> dict:
        return {
            "type": "mesh",
            "vertices": self.vertices.tolist(),
            "faces": self.faces.tolist(),
            "material": self.material.to_dict(),
            "foreground": self.foreground,
        }


def primitive_from_dict(data: dict):
    kind = data.get("type")
    material = Material.from_dict(data.get("material", {}))
    foreground = bool(data.get("foreground", True))
    if kind == "plane":
        return Plane(
            center=np.asarray(data["center"]),
            normal=np.asarray(data.get("normal", [0.0, 0.0, -1.0])),
            u_axis=np.asarray(data.get("u_axis", [1.0, 0.0, 0.0])),
            width=float(data.get("width", 1.0)),
            height=float(data.get("height", 1.0)),
            material=material,
            foreground=foreground,
        )
    if kind == "sphere":
        return Sphere(np.asarray(data["center"]), float(data["radius"]), material, foreground)
    if kind == "box":
        return Box(np.asarray(data["center"]), np.asarray(data["size"]), material, foreground)
    if kind == "mesh":
        return TriangleMesh(np.asarray(data["vertices"]), np.asarray(data["faces"]), material, foreground)
    raise ConfigError(f"Unknown primitive type '{kind}'")


# ---------------------------------------------------------------------------
# Scene
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lighting:
    """Directional light (`direction` is the direction light travels) plus ambient term."""
    direction: tuple = (-0.3, 0.5, 1.0)
    ambient: float = 0.35
    diffuse: float = 0.65

    def __post_init__(self):
        if self.ambient < 0 or self.diffuse < 0:
            raise InvalidArgumentError("Light intensities must be non-negative")
        direction = np.asarray(self.direction, dtype=np.float64)
        if np.linalg.norm(direction) == 0:
            raise InvalidArgumentError("Light direction must be non-zero")
        object.__setattr__(self, "direction", tuple(float(x) for x in direction / np.linalg.norm(direction)))

    def to_dict(self) -> dict:
        return {"direction": list(self.direction), "ambient": self.ambient, "diffuse": self.diffuse}


@dataclass(frozen=True)
class WorkingVolume:
    """Box in front of the display that foreground surfaces must stay inside."""
    distance: float = 1.25
    depth_range: float = 0.15
    lateral_range: float = 0.4
    vertical_range: float = 0.5

    def contains(self, lo: np.ndarray, hi: np.ndarray) -> bool:
        tol = 1e-9
        return bool(
            lo[0] >= -self.lateral_range - tol and hi[0] <= self.lateral_range + tol
            and lo[1] >= -self.vertical_range - tol and hi[1] <= self.vertical_range + tol
            and lo[2] >= self.distance - self.depth_range - tol
            and hi[2] <= self.distance + self.depth_range + tol
        )


@dataclass(frozen=True)
class SceneSpec:
    primitives: tuple = ()
    light: Lighting = field(default_factory=Lighting)
    background: tuple = (0.0, 0.0, 0.0)
    volume: WorkingVolume | None = field(default_factory=WorkingVolume)
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        if self.volume is None:
            return
        for index, primitive in enumerate(self.primitives):
            if primitive.foreground and not self.volume.contains(*primitive.bounds()):
                raise InvalidArgumentError(
                    f"Foreground primitive {index} ({type(primitive).__name__}) leaves the working volume"
                )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "primitives": [p.to_dict() for p in self.primitives],
            "light": self.light.to_dict(),
            "background": list(self.background),
            "volume": None if self.volume is None else {
                "distance": self.volume.distance,
                "depth_range": self.volume.depth_range,
                "lateral_range": self.volume.lateral_range,
                "vertical_range": self.volume.vertical_range,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        """Build a scene from `{"preset": name, ...kwargs}` or an explicit primitive list."""
        if "preset" in data:
            name = data["preset"]
            if name not in PRESETS:
                raise ConfigError(f"Unknown scene preset '{name}'", path="preset")
            kwargs = {k: v for k, v in data.items() if k != "preset"}
            try:
                return PRESETS[name](**kwargs)
            except TypeError as e:
                raise ConfigError(f"Bad arguments for scene preset '{name}': {e}") from e
        volume = data.get("volume", {})
        return cls(
            primitives=tuple(primitive_from_dict(p) for p in data.get("primitives", [])),
            light=Lighting(**data.get("light", {})),
            background=tuple(data.get("background", (0.0, 0.0, 0.0))),
            volume=None if volume is None else WorkingVolume(**volume),
            name=data.get("name", "custom"),
        )


@dataclass(frozen=True)
class RayHits:
    t: np.ndarray
    normals: np.ndarray
    primitive: np.ndarray

    @property
    def hit(self) -> np.ndarray:
        return self.primitive >= 0


@dataclass(frozen=True)
class GroundTruthView:
    image: ImageBuffer
    depth: DepthMap
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mask", frozen_array(self.mask, dtype=bool))


def cast_rays(scene: SceneSpec, origins: np.ndarray, directions: np.ndarray) -> RayHits:
    """Nearest intersection per ray; equal distances go to the earlier primitive."""
    origins = np.broadcast_to(np.asarray(origins, dtype=np.float64), np.shape(directions))
    directions = np.asarray(directions, dtype=np.float64)
    best = np.full(len(directions), np.inf)
    normals = np.zeros_like(directions)
    primitive = np.full(len(directions), -1, dtype=np.int64)
    for index, prim in enumerate(scene.primitives):
        t, n = prim.intersect(origins, directions)
        closer = t < best
        best[closer] = t[closer]
        normals[closer] = n[closer]
        primitive[closer] = index
    return RayHits(t=best, normals=normals, primitive=primitive)


def _shade(scene: SceneSpec, hits: RayHits, points: np.ndarray, directions: np.ndarray) -> np.ndarray:
    colors = np.broadcast_to(np.asarray(scene.background, dtype=np.float64), points.shape).copy()
    view = directions / np.linalg.norm(directions, axis=-1, keepdims=True)
    light = np.asarray(scene.light.direction)
    for index, prim in enumerate(scene.primitives):
        sel = hits.primitive == index
        if not sel.any():
            continue
        normals = hits.normals[sel]
        # Two-sided surfaces: shade the side facing the viewer
        normals = np.where((np.einsum("ij,ij->i", normals, view[sel]) > 0)[:, None], -normals, normals)
        lambert = np.maximum(0.0, normals @ -light)
        albedo = prim.material.texture.albedo(points[sel])
        shaded = albedo * (scene.light.ambient + scene.light.diffuse * lambert)[:, None]
        if prim.material.specular > 0:
            reflected = light - 2.0 * (normals @ light)[:, None] * normals
            highlight = np.maximum(0.0, np.einsum("ij,ij->i", reflected, -view[sel])) ** prim.material.shininess
            shaded = shaded + prim.material.specular * scene.light.diffuse * highlight[:, None]
        colors[sel] = shaded
    return np.clip(colors, 0.0, 1.0)


def render_ground_truth(scene: SceneSpec, camera: CameraModel) -> GroundTruthView:
    """
    Ray-cast a scene into a camera.

    Rays are scaled to unit camera-z so the hit distance is the depth.
    Depth is valid on every hit; the mask marks hits on foreground primitives.

    Args:
        scene: Scene to render
        camera: Pinhole camera

    Returns:
        GroundTruthView with Lambertian image, exact depth and foreground mask
    """
    v, u = np.mgrid[0:camera.height, 0:camera.width].astype(np.float64)
    rays_cam = np.stack([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, np.ones_like(u)], axis=-1)
    directions = (rays_cam @ camera.rotation).reshape(-1, 3)
    origins = np.broadcast_to(camera.center, directions.shape)

    hits = cast_rays(scene, origins, directions)
    finite = np.where(hits.hit, hits.t, 0.0)
    points = origins + finite[:, None] * directions
    image = _shade(scene, hits, points, directions)

    shape = (camera.height, camera.width)
    foreground = np.zeros(len(directions), dtype=bool)
    for index, prim in enumerate(scene.primitives):
        if prim.foreground:
            foreground |= hits.primitive == index
    return GroundTruthView(
        image=ImageBuffer(image.reshape(shape + (3,))),
        depth=DepthMap.from_array(finite.reshape(shape), hits.hit.reshape(shape)),
        mask=foreground.reshape(shape),
    )


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def _noise(seed: int, color=(0.8, 0.7, 0.6), cell: float = 0.03, specular: float = 0.0) -> Material:
    return Material(texture=TextureSpec(kind="noise", color=color, cell=cell, seed=seed), specular=specular)


def plane_scene(depth: float = 1.25, width: float = 0.8, height: float = 1.0, seed: int = 0,
                volume: bool = True) -> SceneSpec:
    """Textured fronto-parallel plane facing the rig."""
    plane = Plane(center=np.array([0.0, 0.0, depth]), width=width, height=height, material=_noise(seed))
    return SceneSpec(primitives=(plane,), volume=WorkingVolume() if volume else None, name="plane")


def sphere_scene(radius: float = 0.15, center=(0.0, 0.0, 1.25), seed: int = 0) -> SceneSpec:
    sphere = Sphere(center=np.asarray(center, dtype=np.float64), radius=radius, material=_noise(seed))
    return SceneSpec(primitives=(sphere,), name="sphere")


def two_layer_scene(gap: float = 0.1, back_depth: float = 1.35, seed: int = 0) -> SceneSpec:
    """Vertical bar in front of a wide backdrop, both foreground, separated by `gap` meters."""
    back = Plane(center=np.array([0.0, 0.0, back_depth]), width=0.8, height=0.8,
                 material=_noise(seed, color=(0.5, 0.6, 0.8)))
    front = Plane(center=np.array([0.0, 0.0, back_depth - gap]), width=0.12, height=0.6,
                  material=_noise(seed + 1, color=(0.9, 0.6, 0.4)))
    return SceneSpec(primitives=(front, back), name="two_layer")


def mannequin_scene(seed: int = 0, specular: float = 0.0) -> SceneSpec:
    """
    Seated figure: head, torso, upper arms and hands resting in front of the torso.

    Proportions and placement jitter with the seed; every part stays inside
    the working volume. The hands occlude the torso from some cameras.
    """
    rng = np.random.default_rng(seed)
    shift = rng.uniform(-0.05, 0.05)
    lean = rng.uniform(-0.02, 0.02)
    head_r = rng.uniform(0.085, 0.1)
    skin = (0.85, 0.65, 0.55)
    cloth = tuple(rng.uniform(0.35, 0.85, size=3))
    torso_z = 1.28 + lean

    parts = [
        Sphere(np.array([shift, -0.12, torso_z - 0.04]), head_r, _noise(seed * 10 + 1, skin, 0.02, specular)),
        Box(np.array([shift, 0.15, torso_z]), np.array([0.34, 0.4, 0.16]), _noise(seed * 10 + 2, cloth, 0.03, specular)),
        Box(np.array([shift - 0.21, 0.12, torso_z - 0.02]), np.array([0.07, 0.3, 0.09]),
            _noise(seed * 10 + 3, cloth, 0.03, specular)),
        Box(np.array([shift + 0.21, 0.12, torso_z - 0.02]), np.array([0.07, 0.3, 0.09]),
            _noise(seed * 10 + 4, cloth, 0.03, specular)),
    ]
    for side, hand_seed in ((-1, 5), (1, 6)):
        hand_x = shift + side * rng.uniform(0.05, 0.1)
        hand_y = rng.uniform(0.2, 0.3)
        parts.append(Sphere(np.array([hand_x, hand_y, torso_z - 0.11]), 0.045,
                            _noise(seed * 10 + hand_seed, skin, 0.02, specular)))
    return SceneSpec(primitives=tuple(parts), name="mannequin")


def self_occlusion_scene(seed: int = 0) -> SceneSpec:
    """Sphere floating in front of a textured board: large disocclusions for every off-axis view."""
    board = Plane(center=np.array([0.0, 0.0, 1.38]), width=0.7, height=0.8, material=_noise(seed, (0.6, 0.75, 0.5)))
    ball = Sphere(np.array([0.0, 0.0, 1.2]), 0.09, _noise(seed + 1, (0.9, 0.5, 0.4)))
    return SceneSpec(primitives=(ball, board), name="self_occlusion")


def specular_scene(seed: int = 0) -> SceneSpec:
    """Mannequin with glossy materials; synthesis is expected to degrade on it."""
    scene = mannequin_scene(seed, specular=0.6)
    return SceneSpec(primitives=scene.primitives, light=scene.light, name="specular")


PRESETS = {
    "plane": plane_scene,
    "sphere": sphere_scene,
    "two_layer": two_layer_scene,
    "mannequin": mannequin_scene,
    "self_occlusion": self_occlusion_scene,
    "specular": specular_scene,
}


# ---------------------------------------------------------------------------
# Fixture cache
# ---------------------------------------------------------------------------

def fixture_key(scene: SceneSpec, camera: CameraModel) -> str:
    payload = json.dumps({"scene": scene.to_dict(), "camera": camera.to_dict()}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class FixtureCache:
    """Rendered ground truth stored as .npz files under a content-hash name."""

    def __init__(self, root):
        self.root = Path(root)

    def path_for(self, scene: SceneSpec, camera: CameraModel) -> Path:
        key = fixture_key(scene, camera)
        return self.root / key[:2] / f"{key}.npz"

    def render(self, scene: SceneSpec, camera: CameraModel) -> GroundTruthView:
        path = self.path_for(scene, camera)
        if path.exists():
            with np.load(path) as data:
                return GroundTruthView(
                    image=ImageBuffer(data["image"]),
                    depth=DepthMap(data["depth"], data["depth_mask"]),
                    mask=data["mask"],
                )
        view = render_ground_truth(scene, camera)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(
            path,
            image=view.image.values,
            depth=view.depth.depth,
            depth_mask=view.depth.mask,
            mask=view.mask,
        )
        logger.debug("Cached fixture %s", path.name)
        return view
