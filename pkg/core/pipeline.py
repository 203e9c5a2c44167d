"""
Synthesis Pipeline

Pure Python implementation - NO Django imports.
Runs capture (synthetic render or image directory) -> cascaded stereo ->
latent splatting at reduced resolution -> decode -> full-resolution
occlusion-aware blending -> refinement fusion, then writes images, PFM
planes and a JSON manifest.
"""
import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from core import image_io
from core.blending import BlendOutcome, render_blend, refine_fuse, upsample
from core.config import UNHASHED_KEYS, PipelineConfig, build_pipeline_config
from core.errors import ConfigError, InvalidArgumentError, StageError
from core.geometry import CameraModel, depth_to_disparity
from core.imaging import DisparityMap, ImageBuffer, apply_color_correction
from core.metrics import psnr, ssim
from core.rig import CAMERA_NAMES, novel_view_from_eyes
from core.scene import FixtureCache, render_ground_truth
from core.splatting import DecodedView, decode_features, encode_source, lift_to_gaussians, rasterize_gaussians
from core.stereo import CascadeResult, EPEReport, cascade_estimate, epe


logger = logging.getLogger(__name__)

SOURCE_VIEWS = ("cam0", "cam2", "cam3")
MANIFEST_NAME = "manifest.json"
VOLATILE_MANIFEST_KEYS = ("timing", "created_at")
SYNTHESIS_STAGES = ("cascade", "encode", "rasterize", "decode", "blend", "refine")


class StageTimer:
    """Wall-clock time per named stage; failures leave as StageError tagged with the stage, config errors pass through."""

    def __init__(self):
        self.timings: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        logger.info("Stage %s started", name)
        start = time.perf_counter()
        try:
            yield
        except (StageError, ConfigError):
            raise
        except Exception as e:
            logger.error("Stage %s failed: %s", name, e)
            raise StageError(name, e) from e
        finally:
            elapsed = (time.perf_counter() - start) * 1000.0
            self.timings[name] = self.timings.get(name, 0.0) + elapsed
        logger.info("Stage %s finished in %.1f ms", name, elapsed)

    def total(self, names) -> float:
        return sum(self.timings.get(n, 0.0) for n in names)


@dataclass(frozen=True)
class SourceViews:
    """Four captured (or rendered) views with foreground masks; ground truth when synthetic."""
    images: dict
    masks: dict
    ground_truth: dict | None = None


@dataclass
class ViewProducts:
    final: ImageBuffer
    decoded: DecodedView
    blend: BlendOutcome
    low_res_upsampled: ImageBuffer


@dataclass
class StereoOutcome:
    cascade: CascadeResult
    baseline: CascadeResult | None
    reports: dict = field(default_factory=dict)
    output_dir: Path | None = None


@dataclass
class SynthesisOutcome:
    """Result of a synthesis run."""
    output_dir: Path
    manifest: dict
    images: dict
    metrics: dict
    synthesis_ms: float
    config_hash: str


def load_sources(cfg: PipelineConfig) -> SourceViews:
    """Render the rig views of the configured scene, or read them from the capture directory."""
    if cfg.scene is not None:
        truth = {name: render_ground_truth(cfg.scene, cfg.rig.cameras[name]) for name in CAMERA_NAMES}
        images = {name: view.image for name, view in truth.items()}
        masks = {name: np.array(view.mask) for name, view in truth.items()}
    else:
        truth = None
        images, masks = {}, {}
        for name in CAMERA_NAMES:
            path = cfg.captures / f"{name}.png"
            if not path.exists():
                raise ConfigError(f"Missing capture image: {path}", path=str(path))
            images[name] = image_io.read_png(path)
            mask_path = cfg.captures / f"{name}_mask.png"
            masks[name] = image_io.read_mask_png(mask_path) if mask_path.exists() else np.ones(images[name].shape, bool)

    for name, correction in cfg.color_correction.items():
        if name not in images:
            raise ConfigError(f"Color correction for unknown camera '{name}'", path=f"color_correction.{name}")
        images[name] = apply_color_correction(correction, images[name])
    return SourceViews(images=images, masks=masks, ground_truth=truth)


def novel_cameras(cfg: PipelineConfig) -> dict:
    """Novel cameras in the capture frame, keyed by view name."""
    if cfg.novel.camera is not None:
        return {"novel": cfg.rig.cameras[cfg.novel.camera]}
    views = novel_view_from_eyes(
        cfg.rig,
        cfg.novel.eyes,
        width=cfg.novel.width,
        height=cfg.novel.height,
        fov_deg=cfg.novel.fov_deg,
        remote_eyes=cfg.novel.remote_eyes,
        depth_offset=cfg.novel.depth_offset,
    )
    return {"left": views.left, "right": views.right}


def ground_truth_disparities(cfg: PipelineConfig, sources: SourceViews) -> dict:
    """Foreground ground-truth disparity for the reference/target views of both pairs."""
    truth = sources.ground_truth
    out = {}
    for key, pair, name in (
        ("upper", cfg.rig.upper_pair, "cam0"),
        ("lower", cfg.rig.lower_pair, "cam2"),
    ):
        depth = truth[name].depth
        disparity = depth_to_disparity(pair, depth)
        out[key] = DisparityMap.from_array(disparity.disparity, disparity.mask & truth[name].mask)
    return out


def _epe_or_none(pred, gt) -> EPEReport | None:
    try:
        return epe(pred, gt)
    except InvalidArgumentError as e:
        logger.warning("EPE unavailable: %s", e)
        return None


def run_stereo(cfg: PipelineConfig, compare_without_init: bool = True) -> StereoOutcome:
    """
    Cascaded disparity only, with EPE rows for the narrow pair and the wide pair with and without initialization.
    """
    timer = StageTimer()
    with timer.stage("capture"):
        sources = load_sources(cfg)
    with timer.stage("cascade"):
        cascade = cascade_estimate(cfg.rig, sources.images, sources.masks, cfg.matcher, initialize=True)
    baseline = None
    if compare_without_init:
        with timer.stage("cascade_without_init"):
            baseline = cascade_estimate(cfg.rig, sources.images, sources.masks, cfg.matcher, initialize=False)

    reports = {}
    if sources.ground_truth is not None:
        gt = ground_truth_disparities(cfg, sources)
        rows = {
            "small_baseline": (cascade.upper.reference, gt["upper"]),
            "large_baseline_with_init": (cascade.lower.reference, gt["lower"]),
        }
        if baseline is not None:
            rows["large_baseline_without_init"] = (baseline.lower.reference, gt["lower"])
        for row, (pred, truth) in rows.items():
            report = _epe_or_none(pred, truth)
            if report is not None:
                reports[row] = report

    output_dir = Path(cfg.output_dir)
    with timer.stage("write"):
        image_io.write_pfm(output_dir / "disparity_upper.pfm", cascade.upper.reference.disparity)
        image_io.write_pfm(output_dir / "disparity_lower.pfm", cascade.lower.reference.disparity)
        image_io.write_pfm(output_dir / "disparity_lower_target.pfm", cascade.lower.target.disparity)
        for name, depth in cascade.depths.items():
            image_io.write_pfm(output_dir / f"depth_{name}.pfm", depth.depth)
        record = {
            "config_hash": cfg.config_hash,
            "epe": {row: report.to_dict() for row, report in reports.items()},
            "timing": timer.timings,
        }
        (output_dir / "stereo.json").write_text(json.dumps(record, indent=2, sort_keys=True))
    return StereoOutcome(cascade=cascade, baseline=baseline, reports=reports, output_dir=output_dir)


def fusion_weights(rig) -> dict:
    """Depth precision of each source view: disparity per meter grows with the pair baseline, squared."""
    upper, lower = rig.upper_pair.baseline ** 2, rig.lower_pair.baseline ** 2
    return {"cam0": upper, "cam2": lower, "cam3": lower}


def synthesize_view(
    cfg: PipelineConfig,
    sources: SourceViews,
    depths: dict,
    camera: CameraModel,
    timer: StageTimer,
) -> ViewProducts:
    """Latent splatting at reduced resolution, full-resolution blending and refinement for one novel camera."""
    images = {n: sources.images[n] for n in SOURCE_VIEWS}
    masks = {n: sources.masks[n] for n in SOURCE_VIEWS}
    cameras = {n: cfg.rig.cameras[n] for n in SOURCE_VIEWS}

    with timer.stage("encode"):
        outputs = {n: encode_source(images[n], depths[n], masks[n], cameras[n], cfg.splat) for n in SOURCE_VIEWS}
        cloud = lift_to_gaussians(outputs, depths, cameras)
    with timer.stage("rasterize"):
        reduced = camera.scaled(cfg.splat.resolution_factor)
        features = rasterize_gaussians(cloud, reduced, tile=cfg.splat.tile, workers=cfg.splat.workers)
    with timer.stage("decode"):
        decoded = decode_features(features, cfg.splat.alpha_min)
    with timer.stage("blend"):
        blended = render_blend(depths, images, masks, cameras, camera, cfg.blend, fusion_weights(cfg.rig))
    with timer.stage("refine"):
        final = refine_fuse(decoded.image, blended.blend, blended.foreground)
    return ViewProducts(
        final=final,
        decoded=decoded,
        blend=blended,
        low_res_upsampled=upsample(decoded.image, camera.width, camera.height),
    )


def _view_metrics(cfg: PipelineConfig, camera: CameraModel, products: ViewProducts) -> dict:
    truth = render_ground_truth(cfg.scene, camera)
    blend = products.blend.blend
    hole_zeroed = ImageBuffer(np.where(blend.holes[..., None], 0.0, blend.image.values))
    return {
        "psnr": psnr(products.final, truth.image),
        "ssim": ssim(products.final, truth.image),
        "psnr_blend": psnr(hole_zeroed, truth.image),
        "psnr_lowres": psnr(products.low_res_upsampled, truth.image),
        "hole_fraction": float(blend.holes[truth.mask].mean()) if truth.mask.any() else 0.0,
    }


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_view(directory: Path, products: ViewProducts) -> list[Path]:
    blend = products.blend
    paths = [
        image_io.write_png(directory / "final.png", products.final),
        image_io.write_png(directory / "blend.png", blend.blend.image),
        image_io.write_mask_png(directory / "holes.png", blend.blend.holes),
        image_io.write_mask_png(directory / "foreground.png", blend.foreground),
        image_io.write_png(directory / "lowres.png", products.decoded.image),
        image_io.write_pfm(directory / "fused_depth.pfm", blend.fused_depth.depth),
    ]
    for name, sample in blend.samples.items():
        paths.append(image_io.write_pfm(directory / f"weights_{name}.pfm", sample.weight))
    paths += image_io.write_feature_stack(directory / "features", products.decoded.features)
    return paths


def deterministic_manifest(manifest: dict) -> dict:
    """Manifest without wall-clock timing and creation time."""
    return {k: v for k, v in manifest.items() if k not in VOLATILE_MANIFEST_KEYS}


def run_synthesize(cfg: PipelineConfig) -> SynthesisOutcome:
    """
    Run the full synthesis pipeline and write its artifacts.

    Args:
        cfg: Resolved pipeline configuration

    Returns:
        SynthesisOutcome with final images, metrics (when ground truth exists) and the manifest

    Raises:
        StageError: Tagged with the failing stage
        ConfigError: For capture inputs that cannot be found
    """
    timer = StageTimer()
    output_dir = Path(cfg.output_dir)
    logger.info("Synthesis run %s -> %s", cfg.config_hash[:12], output_dir)

    with timer.stage("capture"):
        sources = load_sources(cfg)
    with timer.stage("cascade"):
        cascade = cascade_estimate(
            cfg.rig, sources.images, sources.masks, cfg.matcher, initialize=cfg.initialize,
        )

    cameras = novel_cameras(cfg)
    products = {}
    for view_name, camera in cameras.items():
        products[view_name] = synthesize_view(cfg, sources, cascade.depths, camera, timer)
    synthesis_ms = timer.total(SYNTHESIS_STAGES)

    metrics = {}
    if cfg.scene is not None:
        with timer.stage("evaluate"):
            for view_name, camera in cameras.items():
                metrics[view_name] = _view_metrics(cfg, camera, products[view_name])
            gt = ground_truth_disparities(cfg, sources)
            for row, pred in (("small_baseline", cascade.upper.reference), ("large_baseline", cascade.lower.reference)):
                report = _epe_or_none(pred, gt["upper" if row == "small_baseline" else "lower"])
                if report is not None:
                    metrics.setdefault("stereo", {})[row] = report.to_dict()

    with timer.stage("write"):
        written = []
        for name, depth in cascade.depths.items():
            written.append(image_io.write_pfm(output_dir / f"depth_{name}.pfm", depth.depth))
        written.append(image_io.write_pfm(output_dir / "disparity_upper.pfm", cascade.upper.reference.disparity))
        written.append(image_io.write_pfm(output_dir / "disparity_lower.pfm", cascade.lower.reference.disparity))
        for view_name, view in products.items():
            written += _write_view(output_dir / view_name, view)
        manifest = {
            "config_hash": cfg.config_hash,
            "config": {k: v for k, v in cfg.document.items() if k not in UNHASHED_KEYS},
            "seed": cfg.seed,
            "scene": cfg.scene.name if cfg.scene is not None else None,
            "views": {name: camera.to_dict() for name, camera in cameras.items()},
            "outputs": {str(p.relative_to(output_dir)): _file_digest(p) for p in sorted(written)},
            "metrics": metrics,
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
    manifest["timing"] = {**timer.timings, "synthesis_ms": synthesis_ms}
    (output_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    logger.info("Synthesis finished: %.1f ms synthesis, %d files", synthesis_ms, len(written))

    return SynthesisOutcome(
        output_dir=output_dir,
        manifest=manifest,
        images={name: view.final for name, view in products.items()},
        metrics=metrics,
        synthesis_ms=synthesis_ms,
        config_hash=cfg.config_hash,
    )


def evaluate_output(output_dir) -> dict:
    """
    Score a finished run against freshly rendered ground truth.

    The run's manifest supplies the configuration; only synthetic-scene runs
    can be scored.
    """
    output_dir = Path(output_dir)
    manifest_path = output_dir / MANIFEST_NAME
    if not manifest_path.exists():
        raise ConfigError(f"No manifest in {output_dir}", path=str(manifest_path))
    manifest = json.loads(manifest_path.read_text())
    cfg = build_pipeline_config({**manifest["config"], "output_dir": str(output_dir)})
    if cfg.scene is None:
        raise ConfigError("Run has no synthetic scene to evaluate against", path="scene")

    results = {}
    for view_name, camera_doc in manifest["views"].items():
        camera = CameraModel.from_dict(camera_doc)
        truth = render_ground_truth(cfg.scene, camera)
        final = image_io.read_png(output_dir / view_name / "final.png")
        results[view_name] = {"psnr": psnr(final, truth.image), "ssim": ssim(final, truth.image)}
    return results


def generate_captures(scene, rig, output_dir, cache_dir=None) -> list[Path]:
    """
    Render a scene through every rig camera and write a capture directory.

    The directory holds cam{k}.png, cam{k}_mask.png and the ground-truth
    cam{k}_depth.pfm, plus scene.json and rig.json, so it can be fed back
    as `captures` and scored against the same scene.
    """
    output_dir = Path(output_dir)
    cache = FixtureCache(cache_dir) if cache_dir is not None else None
    written = []
    for name in CAMERA_NAMES:
        camera = rig.cameras[name]
        view = cache.render(scene, camera) if cache is not None else render_ground_truth(scene, camera)
        written.append(image_io.write_png(output_dir / f"{name}.png", view.image))
        written.append(image_io.write_mask_png(output_dir / f"{name}_mask.png", view.mask))
        written.append(image_io.write_pfm(output_dir / f"{name}_depth.pfm", view.depth.depth))
    for filename, document in (("scene.json", scene.to_dict()), ("rig.json", rig.to_dict())):
        path = output_dir / filename
        path.write_text(json.dumps(document, indent=2, sort_keys=True))
        written.append(path)
    logger.info("Wrote %s capture set (%d files) to %s", scene.name, len(written), output_dir)
    return written
