"""
Pipeline Configuration

Pure Python implementation - NO Django imports.
JSON documents mapped onto frozen dataclasses. Precedence is applied by the
caller: defaults < config file < overrides.
"""
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from core.blending import BlendConfig
from core.errors import ConfigError, InvalidArgumentError
from core.imaging import ColorCorrection
from core.rig import NOMINAL_EYE_DISTANCE, EyePose, RigSpec, default_rig
from core.scene import SceneSpec
from core.splatting import SplatConfig
from core.stereo import MatcherConfig


PIPELINE_KEYS = {
    "rig", "scene", "captures", "matcher", "blend", "splat", "novel",
    "output_dir", "seed", "workers", "initialize", "color_correction",
}
NOVEL_KEYS = {"camera", "eyes", "remote_eyes", "width", "height", "fov_deg", "depth_offset"}

# Keys that never change the synthesized pixels
UNHASHED_KEYS = {"output_dir", "workers"}

# Sections whose overrides merge key by key; any other key is replaced whole
MERGED_SECTIONS = {"matcher", "blend", "splat", "novel"}


def section_from_dict(cls, data: dict | None, section: str):
    """Build a config dataclass, rejecting keys it does not declare."""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(f"Section '{section}' must be an object", path=section)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown key '{section}.{unknown[0]}'", path=f"{section}.{unknown[0]}")
    try:
        return cls(**data)
    except (InvalidArgumentError, TypeError) as e:
        raise ConfigError(f"Invalid '{section}' section: {e}", path=section) from e


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}", path=str(path))
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"Malformed JSON in {path}: {e}", path=str(path)) from e
    if not isinstance(data, dict):
        raise ConfigError(f"Top level of {path} must be an object", path=str(path))
    return data


def _resolve_document(value, base_dir: Path, section: str) -> dict | None:
    """A section given inline as an object or as a path to a JSON file."""
    if value is None or isinstance(value, dict):
        return value
    if isinstance(value, str):
        return read_json(_resolve_path(value, base_dir))
    raise ConfigError(f"Section '{section}' must be an object or a file path", path=section)


def _resolve_path(value: str, base_dir: Path) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base_dir / path


@dataclass(frozen=True)
class NovelSpec:
    """Which novel views to render: a rig camera, or both eyes of a tracked viewer."""
    camera: str | None = None
    eyes: EyePose | None = None
    remote_eyes: EyePose | None = None
    width: int = 1024
    height: int = 1024
    fov_deg: float = 30.0
    depth_offset: float = 0.0

    @classmethod
    def from_dict(cls, data: dict | None) -> "NovelSpec":
        data = dict(data or {})
        unknown = sorted(set(data) - NOVEL_KEYS)
        if unknown:
            raise ConfigError(f"Unknown key 'novel.{unknown[0]}'", path=f"novel.{unknown[0]}")
        try:
            eyes = EyePose.from_dict(data["eyes"]) if "eyes" in data else None
            remote = EyePose.from_dict(data["remote_eyes"]) if "remote_eyes" in data else None
        except (InvalidArgumentError, KeyError) as e:
            raise ConfigError(f"Invalid eye pose: {e}", path="novel.eyes") from e
        if data.get("camera") is None and eyes is None:
            eyes = EyePose.centered(NOMINAL_EYE_DISTANCE)
        return cls(
            camera=data.get("camera"),
            eyes=eyes,
            remote_eyes=remote,
            width=int(data.get("width", 1024)),
            height=int(data.get("height", 1024)),
            fov_deg=float(data.get("fov_deg", 30.0)),
            depth_offset=float(data.get("depth_offset", 0.0)),
        )


@dataclass(frozen=True)
class PipelineConfig:
    rig: RigSpec
    scene: SceneSpec | None
    captures: Path | None
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    blend: BlendConfig = field(default_factory=BlendConfig)
    splat: SplatConfig = field(default_factory=SplatConfig)
    novel: NovelSpec = field(default_factory=NovelSpec)
    output_dir: Path = Path("runs")
    seed: int = 0
    workers: int = 1
    initialize: bool = True
    color_correction: dict = field(default_factory=dict)
    document: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        """Hash of the resolved document, ignoring keys that cannot affect pixels."""
        hashed = {k: v for k, v in self.document.items() if k not in UNHASHED_KEYS}
        payload = json.dumps(hashed, sort_keys=True, default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_pipeline_config(document: dict, base_dir=None) -> PipelineConfig:
    """
    Validate a resolved config document and build the PipelineConfig.

    Args:
        document: Config dictionary (defaults, file and overrides already merged)
        base_dir: Directory relative paths are resolved against

    Returns:
        PipelineConfig

    Raises:
        ConfigError: Naming the unknown key or missing path
    """
    base_dir = Path(base_dir or ".")
    unknown = sorted(set(document) - PIPELINE_KEYS)
    if unknown:
        raise ConfigError(f"Unknown config key '{unknown[0]}'", path=unknown[0])

    seed = int(document.get("seed", 0))
    workers = int(document.get("workers", 1))

    rig_doc = _resolve_document(document.get("rig"), base_dir, "rig")
    try:
        rig = default_rig() if rig_doc is None else RigSpec.from_dict(rig_doc)
    except (InvalidArgumentError, KeyError, TypeError) as e:
        raise ConfigError(f"Invalid rig: {e}", path="rig") from e

    captures = None
    if document.get("captures") is not None:
        captures = _resolve_path(document["captures"], base_dir)
        if not captures.is_dir():
            raise ConfigError(f"Capture directory not found: {captures}", path=str(captures))

    scene = None
    scene_doc = _resolve_document(document.get("scene"), base_dir, "scene")
    if scene_doc is not None:
        if "preset" in scene_doc and "seed" not in scene_doc:
            scene_doc = {**scene_doc, "seed": seed}
        try:
            scene = SceneSpec.from_dict(scene_doc)
        except (InvalidArgumentError, KeyError, TypeError) as e:
            raise ConfigError(f"Invalid scene: {e}", path="scene") from e
    if scene is None and captures is None:
        raise ConfigError("Config needs either 'scene' or 'captures'", path="scene")

    matcher_doc = {"workers": workers, **(document.get("matcher") or {})}
    splat_doc = {"workers": workers, **(document.get("splat") or {})}

    corrections = {}
    for name, entry in (document.get("color_correction") or {}).items():
        try:
            corrections[name] = ColorCorrection(
                gamma=float(entry.get("gamma", 1.0)),
                matrix=np.asarray(entry.get("matrix", np.eye(3).tolist()), dtype=np.float64),
            )
        except InvalidArgumentError as e:
            raise ConfigError(f"Invalid color correction for {name}: {e}", path=f"color_correction.{name}") from e

    novel = NovelSpec.from_dict(document.get("novel"))
    if novel.camera is not None and novel.camera not in rig.cameras:
        raise ConfigError(f"Novel camera '{novel.camera}' is not part of the rig", path="novel.camera")

    resolved = dict(document)
    resolved["rig"] = rig.to_dict()
    if scene is not None:
        resolved["scene"] = scene.to_dict()
    if captures is not None:
        resolved["captures"] = str(captures)

    return PipelineConfig(
        rig=rig,
        scene=scene,
        captures=captures,
        matcher=section_from_dict(MatcherConfig, matcher_doc, "matcher"),
        blend=section_from_dict(BlendConfig, document.get("blend"), "blend"),
        splat=section_from_dict(SplatConfig, splat_doc, "splat"),
        novel=novel,
        output_dir=Path(document.get("output_dir", "runs")),
        seed=seed,
        workers=workers,
        initialize=bool(document.get("initialize", True)),
        color_correction=corrections,
        document=resolved,
    )


def load_pipeline_config(path=None, defaults: dict | None = None, overrides: dict | None = None) -> PipelineConfig:
    """
    Merge defaults, an optional JSON file and overrides, then build the config.

    Override values of None are ignored so unset command-line flags keep
    the file's value. Tuning sections merge key by key.
    """
    document = dict(defaults or {})
    base_dir = Path(".")
    if path is not None:
        document.update(read_json(path))
        base_dir = Path(path).resolve().parent
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in MERGED_SECTIONS and isinstance(value, dict) and isinstance(document.get(key), dict):
            document[key] = {**document[key], **value}
        else:
            document[key] = value
    return build_pipeline_config(document, base_dir)
