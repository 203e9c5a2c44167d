import json

from synthesis import services
from synthesis.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Print a latency budget: per-stage costs, computed and declared totals, frame-budget check"

    def add_arguments(self, parser):
        parser.add_argument('--preset', default='system', help='Built-in budget: system or synthesis')
        parser.add_argument('--budget', help='Budget JSON file with stages [{"stage", "ms"}] and declared_total')
        parser.add_argument('--measured-ms', type=float, help='Measured synthesis time to check')
        parser.add_argument('--run', type=int, help='Take the measured time from a recorded run')
        parser.add_argument('--frame-budget-ms', type=float, help='Per-frame synthesis budget')
        parser.add_argument('--json', action='store_true', help='Print the report as JSON')

    def handle(self, *args, **options):
        with self.handle_errors():
            report = services.build_latency_report(
                preset=options['preset'],
                budget_path=options['budget'],
                measured_ms=options['measured_ms'],
                frame_budget_ms=options['frame_budget_ms'],
                run_id=options['run'],
            )
        if options['json']:
            self.stdout.write(json.dumps(report.to_dict(), indent=2))
        else:
            self.stdout.write(report.as_table())
        if report.has_discrepancy and not options['json']:
            self.stdout.write(self.style.WARNING(
                f"Stage costs sum to {report.computed_total:.1f} ms, declared total is {report.declared_total:.1f} ms"
            ))
