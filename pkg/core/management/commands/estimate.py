"""
Comando de management para estimar con calibración por entropía generalizada.

Uso:
    python manage.py estimate ate --data datos.csv --treatment T --outcome Y --covariates x1,x2
    python manage.py estimate ssl --data datos.csv --outcome Y --covariates x1,x2 --mechanism mcar
    python manage.py estimate misscov --data datos.csv --x1 x1 --x2 x2 --outcome Y --se bootstrap
"""
from dataclasses import replace

from aplicaciones.services import EstimationService
from core.dataset import read_dataset
from core.exceptions import DataError
from core.management.base import GecalCommand
from core.output import write_results


class Command(GecalCommand):
    help = "Estima con calibración por entropía generalizada: ate, ssl o misscov"
    command_name = "estimate"

    def run(self, config):
        roles = config.column_roles
        options = self.estimation_options(config)

        if config.subcommand == "ate":
            data = read_dataset(config.data_path, roles, missing_role="outcome", observed_roles=("covariates",))
            if data.n_respondents != data.n:
                raise DataError(f"El resultado '{roles.outcome}' tiene faltantes; ate requiere Y completo")
            result = EstimationService.ate_estimate(data.observed, data.treatment, data.missing[:, 0], options)

        elif config.subcommand == "ssl":
            data = read_dataset(config.data_path, roles, missing_role="outcome", observed_roles=("covariates",))
            labeled = data.respondents
            result = EstimationService.ssl_estimate(
                data.observed[labeled],
                data.missing[labeled, 0],
                data.observed[~labeled],
                config.mechanism,
                options,
            )
            result = replace(result, coef_names=("(Intercept)",) + roles.covariates)

        else:
            data = read_dataset(config.data_path, roles, missing_role="x2", observed_roles=("x1", "outcome"))
            p1 = len(roles.x1)
            result = EstimationService.misscov_estimate(
                data.observed[:, :p1], data.missing, data.observed[:, p1], options
            )
            result = replace(result, coef_names=("(Intercept)",) + roles.x1 + roles.x2)

        write_results(
            result,
            config.output_path,
            config.output_format,
            config.precision,
            config.ci_level,
            stream=self.stdout,
        )
        self.report(f"✓ estimate {config.subcommand} ({config.entropy}) sobre {data.n} filas")
