"""
Shared plumbing for the pipeline management commands.

Flags override the JSON config file, which overrides settings defaults.
Config problems exit with status 1, stage failures with status 2.
"""
from contextlib import contextmanager

from django.core.management.base import BaseCommand, CommandError

from core.config import PipelineConfig
from core.errors import ConfigError, InvalidArgumentError, StageError
from synthesis import services


CONFIG_ERROR_EXIT = 1
STAGE_ERROR_EXIT = 2


class PipelineCommand(BaseCommand):
    """Base command adding the config file and override flags."""

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Pipeline config JSON file')
        parser.add_argument('--rig', help='Rig spec JSON file (default: built-in desk rig)')
        parser.add_argument('--scene', help='Scene preset name or scene spec JSON file')
        parser.add_argument('--captures', help='Directory of captured cam0..cam3 images')
        parser.add_argument('--output-dir', help='Directory for run artifacts')
        parser.add_argument('--seed', type=int, help='Seed for procedural scenes')
        parser.add_argument('--workers', type=int, help='Threads per stage (results do not depend on it)')
        parser.add_argument('--iterations', type=int, help='Matcher refinement sweeps per pyramid level')
        parser.add_argument('--max-disparity', type=float, help='Matcher search range in pixels (default: f * B / min_depth per pair)')

    def overrides(self, options) -> dict:
        if options.get('scene') and options.get('captures'):
            raise CommandError("Give either --scene or --captures, not both", returncode=CONFIG_ERROR_EXIT)
        matcher = {
            key: value for key, value in (
                ('iterations', options.get('iterations')),
                ('max_disparity', options.get('max_disparity')),
            ) if value is not None
        }
        return {
            'rig': options.get('rig'),
            'scene': services.scene_document(options.get('scene')),
            'captures': options.get('captures'),
            'output_dir': options.get('output_dir'),
            'seed': options.get('seed'),
            'workers': options.get('workers'),
            'matcher': matcher or None,
        }

    def load_config(self, options) -> PipelineConfig:
        with self.handle_errors():
            return services.load_config(options.get('config'), self.overrides(options))

    @contextmanager
    def handle_errors(self):
        """Translate engine errors into CommandError with the documented exit status."""
        try:
            yield
        except ConfigError as e:
            raise CommandError(f"Config error: {e}", returncode=CONFIG_ERROR_EXIT) from e
        except StageError as e:
            raise CommandError(str(e), returncode=STAGE_ERROR_EXIT) from e
        except InvalidArgumentError as e:
            raise CommandError(f"Invalid argument: {e}", returncode=CONFIG_ERROR_EXIT) from e
