"""
Base de los comandos de gecal: arma el RunConfig y traduce los errores del
proyecto a CommandError con el código de salida correspondiente.
"""
import logging

from django.core.management.base import BaseCommand, CommandError

from aplicaciones.services import EstimationOptions
from core.exceptions import GecalError
from core.runconfig import add_arguments, build_config

logger = logging.getLogger(__name__)


class GecalCommand(BaseCommand):
    command_name = None

    def add_arguments(self, parser):
        add_arguments(parser, self.command_name)

    def handle(self, *args, **options):
        try:
            config = build_config(self.command_name, options)
            self.run(config)
        except GecalError as e:
            logger.error(f"{self.command_name} falló: {e}")
            raise CommandError(str(e), returncode=e.exit_code)

    def run(self, config):
        raise NotImplementedError

    @staticmethod
    def estimation_options(config):
        return EstimationOptions(
            entropy=config.entropy,
            folds=config.K,
            seed=config.seed,
            family=config.family,
            n_knots=config.spline_knots,
            ps_truncation=config.ps_truncation,
            se_method=config.se_method,
            bootstrap_b=config.bootstrap_b,
            normalization=config.normalization,
            n_jobs=config.n_jobs,
        )

    def report(self, message):
        if self.verbosity_level > 0:
            self.stderr.write(self.style.SUCCESS(message))

    def execute(self, *args, **options):
        self.verbosity_level = options.get("verbosity", 1)
        return super().execute(*args, **options)
