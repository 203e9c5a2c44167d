from django.conf import settings

from synthesis import services
from synthesis.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Render a synthetic scene through the rig and write a capture directory"

    def add_arguments(self, parser):
        parser.add_argument('scene', help='Scene preset name or scene spec JSON file')
        parser.add_argument('--rig', help='Rig spec JSON file (default: built-in desk rig)')
        parser.add_argument('--output-dir', help='Capture directory to write')
        parser.add_argument('--seed', type=int, help='Seed for procedural textures')
        parser.add_argument('--cache-dir', help='Reuse rendered fixtures from this directory')

    def handle(self, *args, **options):
        output_dir = options['output_dir'] or f"{settings.VIEWSYNTH_OUTPUT_DIR}/captures"
        with self.handle_errors():
            written = services.generate_scene(
                options['scene'],
                output_dir,
                seed=options['seed'],
                rig_path=options['rig'],
                cache_dir=options['cache_dir'],
            )
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(written)} files to {output_dir}"))

