"""
Comando de management para estudios Monte Carlo.

Uso:
    python manage.py simulate misscov --or 1 --ps 1 --reps 200 --seed 20240901
    python manage.py simulate causal --or 1 --ps 2 --methods IPW,ET --jobs 4
    python manage.py simulate ssl --or 2 --ps 2 --replicates reps.csv
"""
from aplicaciones.services import EstimationOptions
from core.management.base import GecalCommand
from core.output import write_table
from simulacion.generators import SimDesign
from simulacion.services import SimulationService


class Command(GecalCommand):
    help = "Estudio Monte Carlo de los diseños causal, ssl o misscov"
    command_name = "simulate"

    def run(self, config):
        design = SimDesign(
            setting=config.subcommand,
            or_model=config.or_model,
            ps_model=config.ps_model,
            N=config.n or 0,
            n_labeled=config.n_labeled,
            M_reps=config.reps,
            seed=config.seed,
        )
        options = EstimationOptions(
            folds=config.K,
            family=config.family,
            n_knots=config.spline_knots,
            ps_truncation=config.ps_truncation,
            compute_se=False,
        )
        run = SimulationService.run_monte_carlo(
            design, methods=config.methods or None, options=options, n_jobs=config.n_jobs
        )
        write_table(run.table.to_frame(), config.output_path, config.output_format, config.precision, self.stdout)
        if config.replicates_path:
            write_table(
                SimulationService.emit_replicates(run), config.replicates_path, "csv", config.precision
            )
        self.report(f"✓ simulate {design.label}: {design.M_reps} réplicas, N={design.N}")
