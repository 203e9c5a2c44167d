from django.core.management.base import CommandError

from synthesis import services
from synthesis.management.base import CONFIG_ERROR_EXIT, PipelineCommand


class Command(PipelineCommand):
    help = "Score a finished synthesis run against ground-truth renders"

    def add_arguments(self, parser):
        group = parser.add_mutually_exclusive_group()
        group.add_argument('--run', type=int, help='Id of a recorded synthesis run')
        group.add_argument('--output-dir', help='Output directory of a synthesis run')

    def handle(self, *args, **options):
        if options['run'] is None and options['output_dir'] is None:
            raise CommandError("Give --run or --output-dir", returncode=CONFIG_ERROR_EXIT)
        with self.handle_errors():
            results = services.evaluate_run(run_id=options['run'], output_dir=options['output_dir'])
        for view, metrics in results.items():
            self.stdout.write(f"{view}: PSNR {metrics['psnr']:.2f} dB, SSIM {metrics['ssim']:.4f}")
