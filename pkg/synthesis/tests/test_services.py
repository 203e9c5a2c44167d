"""
Tests for Synthesis services.
"""
import json
import tempfile
from pathlib import Path
from unittest.mock import patch

from django.db import DatabaseError
from django.test import TestCase, override_settings

from core.errors import ConfigError
from core.pipeline import SynthesisOutcome
from synthesis.models import SynthesisRun
from synthesis.services import (
    build_latency_report,
    evaluate_run,
    get_recent_runs,
    load_config,
    resolve_rig,
    resolve_scene,
    save_synthesis_run,
    scene_document,
    summary_metrics,
    synthesize,
)


def _outcome(metrics=None, scene='plane'):
    return SynthesisOutcome(
        output_dir=Path('runs/test'),
        manifest={'scene': scene, 'config_hash': 'f' * 64},
        images={},
        metrics=metrics if metrics is not None else {
            'left': {'psnr': 30.0, 'ssim': 0.9},
            'right': {'psnr': 32.0, 'ssim': 0.8},
            'stereo': {'small_baseline': {'epe': 0.2}},
        },
        synthesis_ms=41.0,
        config_hash='f' * 64,
    )


class ServiceTestCase(TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def small_config(self, **overrides):
        return load_config(overrides={
            'scene': {'preset': 'plane'},
            'rig': {'default': {'resolution': 48}},
            'novel': {'camera': 'cam0'},
            'output_dir': str(self.root / 'run'),
            **overrides,
        })


class LoadConfigTests(ServiceTestCase):
    """Tests for config resolution through settings."""

    @override_settings(VIEWSYNTH_SEED=7, VIEWSYNTH_WORKERS=3)
    def test_settings_are_defaults(self):
        """Settings supply the lowest-precedence values."""
        cfg = load_config(overrides={'scene': {'preset': 'plane'}})

        self.assertEqual(cfg.seed, 7)
        self.assertEqual(cfg.workers, 3)

    @override_settings(VIEWSYNTH_SEED=7)
    def test_file_beats_settings(self):
        """A config file value wins over the settings default."""
        path = self.root / 'run.json'
        path.write_text(json.dumps({'scene': {'preset': 'plane'}, 'seed': 2}))

        self.assertEqual(load_config(path).seed, 2)
        self.assertEqual(load_config(path, {'seed': 5}).seed, 5)

    def test_scene_document(self):
        """Preset names become preset documents, anything else is a path."""
        self.assertEqual(scene_document('plane'), {'preset': 'plane'})
        self.assertEqual(scene_document('scenes/room.json'), 'scenes/room.json')
        self.assertIsNone(scene_document(None))

    def test_resolve_scene_uses_seed(self):
        """Preset scenes take the given seed."""
        a = resolve_scene('mannequin', seed=1)
        b = resolve_scene('mannequin', seed=2)

        self.assertNotEqual(a.to_dict(), b.to_dict())

    def test_resolve_rig_default(self):
        """Without a file the built-in rig is used."""
        self.assertEqual(resolve_rig().resolution, (1024, 1024))

    def test_resolve_rig_missing_file(self):
        """A missing rig file is a config error naming the path."""
        with self.assertRaises(ConfigError) as ctx:
            resolve_rig(self.root / 'rig.json')

        self.assertIn('rig.json', ctx.exception.path)


class SummaryMetricsTests(TestCase):
    """Tests for summary_metrics."""

    def test_averages_views_and_skips_stereo(self):
        psnr, ssim = summary_metrics(_outcome().metrics)

        self.assertAlmostEqual(psnr, 31.0)
        self.assertAlmostEqual(ssim, 0.85)

    def test_no_views(self):
        self.assertEqual(summary_metrics({}), (None, None))


class SaveSynthesisRunTests(TestCase):
    """Tests for save_synthesis_run."""

    def test_creates_record(self):
        """save_synthesis_run creates a database record."""
        run = save_synthesis_run(_outcome(), seed=3)

        self.assertIsInstance(run, SynthesisRun)
        self.assertEqual(SynthesisRun.objects.count(), 1)
        self.assertEqual(run.seed, 3)
        self.assertEqual(run.scene_name, 'plane')
        self.assertEqual(run.output_dir, 'runs/test')
        self.assertAlmostEqual(run.psnr, 31.0)
        self.assertEqual(run.synthesis_ms, 41.0)

    def test_capture_run_without_metrics(self):
        """Runs without ground truth store no quality numbers."""
        run = save_synthesis_run(_outcome(metrics={}, scene=None))

        self.assertIsNone(run.psnr)
        self.assertIsNone(run.scene_name)

    def test_get_recent_runs_limit(self):
        for _ in range(3):
            save_synthesis_run(_outcome())

        self.assertEqual(len(get_recent_runs(limit=2)), 2)


class SynthesizeTests(ServiceTestCase):
    """Tests for the synthesize service."""

    @override_settings(VIEWSYNTH_RECORD_RUNS=True)
    def test_records_run(self):
        """A finished run is stored with its manifest."""
        outcome, run = synthesize(self.small_config())

        self.assertIsNotNone(run)
        self.assertEqual(run.config_hash, outcome.config_hash)
        self.assertEqual(run.manifest['config_hash'], outcome.config_hash)
        self.assertIsNotNone(run.psnr)

    def test_record_disabled(self):
        """record=False skips the database."""
        outcome, run = synthesize(self.small_config(), record=False)

        self.assertIsNone(run)
        self.assertEqual(SynthesisRun.objects.count(), 0)
        self.assertTrue((outcome.output_dir / 'manifest.json').exists())

    def test_database_error_is_logged(self):
        """A failing insert does not fail the run."""
        with patch('synthesis.services.save_synthesis_run', side_effect=DatabaseError('locked')):
            with self.assertLogs('synthesis.services', level='WARNING') as logs:
                outcome, run = synthesize(self.small_config(), record=True)

        self.assertIsNone(run)
        self.assertIn('novel', outcome.metrics)
        self.assertIn('Could not record synthesis run', logs.output[0])


class EvaluateRunTests(ServiceTestCase):
    """Tests for evaluate_run."""

    def test_updates_recorded_run(self):
        """Evaluating a recorded run refreshes its PSNR and SSIM."""
        _, run = synthesize(self.small_config(), record=True)
        SynthesisRun.objects.filter(pk=run.pk).update(psnr=None, ssim=None)

        results = evaluate_run(run_id=run.pk)

        run.refresh_from_db()
        self.assertIn('novel', results)
        self.assertAlmostEqual(run.psnr, results['novel']['psnr'])

    def test_output_dir(self):
        synthesize(self.small_config(), record=False)

        results = evaluate_run(output_dir=self.root / 'run')
        self.assertIn('novel', results)

    def test_unknown_run(self):
        with self.assertRaises(ConfigError):
            evaluate_run(run_id=999)

    def test_nothing_to_evaluate(self):
        with self.assertRaises(ConfigError):
            evaluate_run()


class LatencyReportTests(ServiceTestCase):
    """Tests for build_latency_report."""

    def test_system_preset_discrepancy(self):
        """The system budget sums to 154 ms against a declared 149 ms."""
        report = build_latency_report('system')

        self.assertAlmostEqual(report.computed_total, 154.0)
        self.assertAlmostEqual(report.declared_total, 149.0)
        self.assertAlmostEqual(report.discrepancy, 5.0)

    @override_settings(VIEWSYNTH_FRAME_BUDGET_MS=33.0)
    def test_measured_time_from_run(self):
        """The measured time can come from a recorded run."""
        run = save_synthesis_run(_outcome())

        report = build_latency_report('synthesis', run_id=run.pk)

        self.assertEqual(report.measured_ms, 41.0)
        self.assertFalse(report.within_frame_budget)
        self.assertEqual(report.frame_budget_ms, 33.0)

    def test_budget_file(self):
        path = self.root / 'budget.json'
        path.write_text(json.dumps({'stages': [{'stage': 'a', 'ms': 2}, {'stage': 'b', 'ms': 3}], 'declared_total': 5}))

        report = build_latency_report(budget_path=path, measured_ms=4.0, frame_budget_ms=5.0)

        self.assertAlmostEqual(report.computed_total, 5.0)
        self.assertFalse(report.has_discrepancy)
        self.assertTrue(report.within_frame_budget)

    def test_bad_budget_file(self):
        path = self.root / 'budget.json'
        path.write_text(json.dumps({'stages': [{'ms': 2}]}))

        with self.assertRaises(ConfigError):
            build_latency_report(budget_path=path)

    def test_unknown_preset(self):
        with self.assertRaises(ConfigError):
            build_latency_report('network')
