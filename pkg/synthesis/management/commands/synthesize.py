from django.conf import settings

from synthesis import services
from synthesis.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Synthesize novel views from four captures and write images plus a run manifest"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--novel-camera', help='Render from this rig camera instead of the tracked eyes')
        parser.add_argument('--novel-size', type=int, help='Novel view width and height in pixels')
        parser.add_argument('--no-init', action='store_true', help='Match the wide pair without cascade initialization')
        parser.add_argument('--no-record', action='store_true', help='Do not store the run in the database')

    def overrides(self, options) -> dict:
        overrides = super().overrides(options)
        novel = {}
        if options.get('novel_camera'):
            novel['camera'] = options['novel_camera']
        if options.get('novel_size'):
            novel['width'] = novel['height'] = options['novel_size']
        overrides['novel'] = novel or None
        overrides['initialize'] = False if options.get('no_init') else None
        return overrides

    def handle(self, *args, **options):
        cfg = self.load_config(options)
        record = False if options['no_record'] else None
        with self.handle_errors():
            outcome, run = services.synthesize(cfg, record=record)

        for view, metrics in outcome.metrics.items():
            if view == 'stereo':
                continue
            self.stdout.write(f"{view}: PSNR {metrics['psnr']:.2f} dB, SSIM {metrics['ssim']:.4f}")
        budget = settings.VIEWSYNTH_FRAME_BUDGET_MS
        verdict = 'within' if outcome.synthesis_ms <= budget else 'over'
        self.stdout.write(f"Synthesis {outcome.synthesis_ms:.1f} ms ({verdict} {budget:.0f} ms frame budget)")
        if run is not None:
            self.stdout.write(f"Recorded run {run.pk}")
        self.stdout.write(self.style.SUCCESS(f"Outputs in {outcome.output_dir} (config {outcome.config_hash[:12]})"))
