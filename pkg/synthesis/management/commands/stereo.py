from synthesis import services
from synthesis.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Run cascaded disparity estimation and report end-point errors"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--skip-baseline', action='store_true',
            help='Do not rerun the wide pair without initialization for comparison',
        )

    def handle(self, *args, **options):
        cfg = self.load_config(options)
        with self.handle_errors():
            outcome = services.run_stereo(cfg, compare_without_init=not options['skip_baseline'])

        if not outcome.reports:
            self.stdout.write("No ground truth available; disparity maps written only.")
        else:
            self.stdout.write(f"{'Row':<30} {'EPE':>7} {'1px':>6} {'3px':>6} {'5px':>6}")
            for row, report in outcome.reports.items():
                self.stdout.write(
                    f"{row:<30} {report.epe:>7.3f} {report.within_1px:>6.3f} "
                    f"{report.within_3px:>6.3f} {report.within_5px:>6.3f}"
                )
        self.stdout.write(self.style.SUCCESS(f"Stereo outputs in {outcome.output_dir}"))
