"""
Comando de management para exportar los pesos de calibración por unidad.

Uso:
    python manage.py weights --data datos.csv --outcome Y --covariates x1,x2
    python manage.py weights --data datos.csv --delta r --covariates x1,x2 --entropy el --normalize
"""
import numpy as np
import pandas as pd

from calibracion.calibration import CalibrationProblem, solve_weights
from core.dataset import read_dataset
from core.management.base import GecalCommand
from core.output import WEIGHT_COLUMNS, write_table
from modelos.psmodel import fit_logistic, predict_pi, with_intercept


class Command(GecalCommand):
    help = "Pesos de calibración por unidad que balancean las covariables"
    command_name = "weights"

    def run(self, config):
        roles = config.column_roles
        missing_role = "outcome" if roles.outcome else "delta"
        data = read_dataset(config.data_path, roles, missing_role=missing_role, observed_roles=("covariates",))

        design = with_intercept(data.observed)
        fit = fit_logistic(design, data.delta, columns=("(Intercept)",) + roles.covariates,
                           truncation=config.ps_truncation)
        pi_hat = predict_pi(fit, design)
        problem = CalibrationProblem.create(
            data.delta,
            data.observed,
            pi_hat,
            config.entropy,
            include_normalization=bool(config.normalization),
        )
        solution = solve_weights(problem)

        frame = pd.DataFrame(
            {
                "unit": np.arange(1, data.n + 1),
                "delta": data.delta.astype(int),
                "pi_hat": pi_hat,
                "weight": solution.weights,
            },
            columns=WEIGHT_COLUMNS,
        )
        write_table(frame, config.output_path, config.output_format, config.precision, self.stdout)
        self.report(
            f"✓ weights ({config.entropy}): {data.n_respondents} respondentes, "
            f"residuo máximo {solution.max_residual:.2g}"
        )
