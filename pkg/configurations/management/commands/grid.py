from django.core.management.base import CommandError

from configurations.functions import EXIT_OPERATIONAL_ERROR
from configurations.management.commands.analyze import Command as AnalyzeCommand


class Command(AnalyzeCommand):
    help = 'Analyse every point of the axis-aligned grid in the config'
    command_name = 'grid'

    def check_config(self, cfg):
        if cfg.grid is None:
            raise CommandError("grid needs a 'grid' block (min, max, count) in the config",
                               returncode=EXIT_OPERATIONAL_ERROR)
