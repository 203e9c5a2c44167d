"""
Synthesis Service Layer

Bridges Django settings, the run-history database and the management
commands with the framework-agnostic engine in the core module.
"""
import logging
from pathlib import Path

from django.conf import settings
from django.db import DatabaseError

from core import pipeline
from core.config import PipelineConfig, load_pipeline_config, read_json
from core.errors import ConfigError
from core.latency import PRESETS as LATENCY_PRESETS, LatencyBudget, LatencyReport, latency_report
from core.pipeline import StereoOutcome, SynthesisOutcome
from core.rig import RigSpec, default_rig
from core.scene import PRESETS as SCENE_PRESETS, SceneSpec
from .models import SynthesisRun


logger = logging.getLogger(__name__)


def default_document() -> dict:
    """Lowest-precedence config values, taken from settings (and so from the environment)."""
    return {
        'output_dir': settings.VIEWSYNTH_OUTPUT_DIR,
        'seed': settings.VIEWSYNTH_SEED,
        'workers': settings.VIEWSYNTH_WORKERS,
    }


def load_config(config_path=None, overrides: dict | None = None) -> PipelineConfig:
    """
    Resolve a pipeline config: settings defaults < config file < overrides.

    Raises:
        ConfigError: Naming the offending key or path
    """
    return load_pipeline_config(config_path, defaults=default_document(), overrides=overrides)


def scene_document(value: str | None) -> dict | str | None:
    """A --scene value: preset name, or a path to a scene JSON file."""
    if value is None:
        return None
    if value in SCENE_PRESETS:
        return {'preset': value}
    return value


def resolve_scene(value: str, seed: int) -> SceneSpec:
    document = scene_document(value)
    if isinstance(document, str):
        document = read_json(document)
    if 'preset' in document and 'seed' not in document:
        document = {**document, 'seed': seed}
    return SceneSpec.from_dict(document)


def resolve_rig(path=None) -> RigSpec:
    if path is None:
        return default_rig()
    try:
        return RigSpec.from_dict(read_json(path))
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"Invalid rig file {path}: {e}", path=str(path)) from e


def generate_scene(scene: str, output_dir, seed: int | None = None, rig_path=None, cache_dir=None) -> list[Path]:
    """Render a capture set for a scene preset or scene file."""
    seed = settings.VIEWSYNTH_SEED if seed is None else seed
    return pipeline.generate_captures(resolve_scene(scene, seed), resolve_rig(rig_path), output_dir, cache_dir)


def run_stereo(cfg: PipelineConfig, compare_without_init: bool = True) -> StereoOutcome:
    return pipeline.run_stereo(cfg, compare_without_init=compare_without_init)


def summary_metrics(metrics: dict) -> tuple[float | None, float | None]:
    """Mean PSNR and SSIM over the rendered views."""
    views = [m for name, m in metrics.items() if name != 'stereo']
    if not views:
        return None, None
    return (
        sum(m['psnr'] for m in views) / len(views),
        sum(m['ssim'] for m in views) / len(views),
    )


def save_synthesis_run(outcome: SynthesisOutcome, seed: int = 0) -> SynthesisRun:
    """
    Save a synthesis run to the database.

    Args:
        outcome: Finished pipeline run
        seed: Seed the run was made with

    Returns:
        SynthesisRun model instance
    """
    psnr, ssim = summary_metrics(outcome.metrics)
    return SynthesisRun.objects.create(
        config_hash=outcome.config_hash,
        seed=seed,
        scene_name=outcome.manifest.get('scene'),
        output_dir=str(outcome.output_dir),
        manifest=outcome.manifest,
        psnr=psnr,
        ssim=ssim,
        synthesis_ms=outcome.synthesis_ms,
    )


def synthesize(cfg: PipelineConfig, record: bool | None = None) -> tuple[SynthesisOutcome, SynthesisRun | None]:
    """
    Run the synthesis pipeline and record it in the run history.

    A failure to record is logged and does not fail the run.
    """
    outcome = pipeline.run_synthesize(cfg)
    record = settings.VIEWSYNTH_RECORD_RUNS if record is None else record
    if not record:
        return outcome, None
    try:
        run = save_synthesis_run(outcome, seed=cfg.seed)
    except DatabaseError as e:
        logger.warning("Could not record synthesis run %s: %s", cfg.config_hash[:12], e)
        return outcome, None
    return outcome, run


def evaluate_run(run_id: int | None = None, output_dir=None) -> dict:
    """
    Score a finished run against ground truth.

    A recorded run is looked up by id and its PSNR/SSIM fields are refreshed.

    Raises:
        ConfigError: If the run or its output directory cannot be found
    """
    run = None
    if run_id is not None:
        try:
            run = SynthesisRun.objects.get(pk=run_id)
        except SynthesisRun.DoesNotExist:
            raise ConfigError(f"No synthesis run with id {run_id}", path=str(run_id))
        output_dir = run.output_dir
    if output_dir is None:
        raise ConfigError("Nothing to evaluate: give a run id or an output directory")

    results = pipeline.evaluate_output(output_dir)
    if run is not None:
        run.psnr, run.ssim = summary_metrics(results)
        run.save(update_fields=['psnr', 'ssim'])
    return results


def get_recent_runs(limit: int = 20):
    """Get the most recent synthesis runs."""
    return SynthesisRun.objects.all()[:limit]


def build_latency_report(
    preset: str = 'system',
    budget_path=None,
    measured_ms: float | None = None,
    frame_budget_ms: float | None = None,
    run_id: int | None = None,
) -> LatencyReport:
    """
    Latency accounting for a preset or a budget file.

    The measured time comes from `measured_ms`, else from a recorded run.
    """
    if budget_path is not None:
        try:
            budget = LatencyBudget.from_dict(read_json(budget_path))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Invalid latency budget {budget_path}: {e}", path=str(budget_path)) from e
    elif preset in LATENCY_PRESETS:
        budget = LATENCY_PRESETS[preset]
    else:
        raise ConfigError(f"Unknown latency preset '{preset}'", path=preset)

    if measured_ms is None and run_id is not None:
        try:
            measured_ms = SynthesisRun.objects.get(pk=run_id).synthesis_ms
        except SynthesisRun.DoesNotExist:
            raise ConfigError(f"No synthesis run with id {run_id}", path=str(run_id))

    frame_budget_ms = settings.VIEWSYNTH_FRAME_BUDGET_MS if frame_budget_ms is None else frame_budget_ms
    return latency_report(budget, measured_ms=measured_ms, frame_budget_ms=frame_budget_ms)
