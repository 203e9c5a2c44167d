"""
Tests for the pipeline management commands.
"""
import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest.mock import patch

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase, override_settings

from core.errors import StageError
from synthesis.models import SynthesisRun


class CommandTestCase(TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)
        self.rig = self.root / 'rig.json'
        self.rig.write_text(json.dumps({'default': {'resolution': 48}}))

    def tearDown(self):
        self._tmp.cleanup()

    def call(self, *args, **options):
        out = StringIO()
        call_command(*args, stdout=out, **options)
        return out.getvalue()


class GenSceneCommandTests(CommandTestCase):
    """Tests for gen_scene."""

    def test_writes_capture_directory(self):
        output = self.call('gen_scene', 'plane', rig=str(self.rig), output_dir=str(self.root / 'caps'))

        self.assertIn('Wrote 14 files', output)
        self.assertTrue((self.root / 'caps' / 'cam3_mask.png').exists())

    def test_unknown_preset_exits_1(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('gen_scene', 'teapot', output_dir=str(self.root / 'caps'))

        self.assertEqual(ctx.exception.returncode, 1)


class SynthesizeCommandTests(CommandTestCase):
    """Tests for synthesize."""

    @override_settings(VIEWSYNTH_RECORD_RUNS=True)
    def test_synthesize_scene(self):
        output = self.call(
            'synthesize', scene='plane', rig=str(self.rig), novel_camera='cam0',
            output_dir=str(self.root / 'run'),
        )

        self.assertIn('novel: PSNR', output)
        self.assertIn('frame budget', output)
        self.assertIn('Recorded run', output)
        self.assertEqual(SynthesisRun.objects.count(), 1)
        self.assertTrue((self.root / 'run' / 'manifest.json').exists())

    def test_no_record(self):
        self.call(
            'synthesize', scene='plane', rig=str(self.rig), novel_camera='cam0', no_record=True,
            output_dir=str(self.root / 'run'),
        )

        self.assertEqual(SynthesisRun.objects.count(), 0)

    def test_scene_and_captures_exit_1(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('synthesize', scene='plane', captures=str(self.root))

        self.assertEqual(ctx.exception.returncode, 1)

    def test_missing_config_exits_1(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('synthesize', config=str(self.root / 'absent.json'))

        self.assertEqual(ctx.exception.returncode, 1)

    def test_unknown_config_key_exits_1(self):
        path = self.root / 'run.json'
        path.write_text(json.dumps({'scene': {'preset': 'plane'}, 'speed': 'fast'}))

        with self.assertRaises(CommandError) as ctx:
            self.call('synthesize', config=str(path))

        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('speed', str(ctx.exception))

    def test_missing_captures_exit_1(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('synthesize', captures=str(self.root), rig=str(self.rig), output_dir=str(self.root / 'run'))

        self.assertEqual(ctx.exception.returncode, 1)

    def test_stage_failure_exits_2(self):
        with patch('synthesis.services.pipeline.run_synthesize', side_effect=StageError('rasterize', RuntimeError('x'))):
            with self.assertRaises(CommandError) as ctx:
                self.call('synthesize', scene='plane', rig=str(self.rig), output_dir=str(self.root / 'run'))

        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('rasterize', str(ctx.exception))


class StereoCommandTests(CommandTestCase):
    """Tests for stereo."""

    def test_prints_epe_rows(self):
        output = self.call('stereo', scene='plane', rig=str(self.rig), output_dir=str(self.root / 'stereo'))

        self.assertIn('small_baseline', output)
        self.assertIn('large_baseline_with_init', output)
        self.assertIn('large_baseline_without_init', output)
        self.assertTrue((self.root / 'stereo' / 'stereo.json').exists())

    def test_skip_baseline(self):
        output = self.call(
            'stereo', scene='plane', rig=str(self.rig), skip_baseline=True, output_dir=str(self.root / 'stereo'),
        )

        self.assertNotIn('large_baseline_without_init', output)


class EvaluateCommandTests(CommandTestCase):
    """Tests for evaluate."""

    def test_requires_target(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('evaluate')

        self.assertEqual(ctx.exception.returncode, 1)

    def test_evaluate_output_dir(self):
        self.call(
            'synthesize', scene='plane', rig=str(self.rig), novel_camera='cam0', no_record=True,
            output_dir=str(self.root / 'run'),
        )

        output = self.call('evaluate', output_dir=str(self.root / 'run'))

        self.assertIn('novel: PSNR', output)

    def test_unknown_run_exits_1(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('evaluate', run=12345)

        self.assertEqual(ctx.exception.returncode, 1)


class LatencyCommandTests(CommandTestCase):
    """Tests for latency."""

    def test_system_budget_reports_both_totals(self):
        output = self.call('latency')

        self.assertIn('154.0', output)
        self.assertIn('149.0', output)
        self.assertIn('Stage costs sum to 154.0 ms, declared total is 149.0 ms', output)

    def test_synthesis_budget_consistent(self):
        output = self.call('latency', preset='synthesis', measured_ms=20.0)

        self.assertIn('23.5', output)
        self.assertIn('ok', output)
        self.assertNotIn('declared total is', output)

    def test_json_output(self):
        output = self.call('latency', json=True)

        report = json.loads(output)
        self.assertEqual(report['computed_total'], 154.0)
        self.assertEqual(report['discrepancy'], 5.0)

    def test_unknown_preset_exits_1(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('latency', preset='network')

        self.assertEqual(ctx.exception.returncode, 1)
