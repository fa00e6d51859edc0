"""
Constantes globales del proyecto gecal.
Centraliza tolerancias y valores por defecto del estimador de calibración.
"""

# Semillas y particiones
DEFAULT_SEED = 20240901
DEFAULT_FOLDS = 4
DEFAULT_SPLINE_KNOTS = 5
SPLINE_SLOPE_STEP = 1e-6

# Búsqueda lineal (fijos para que las salidas sean reproducibles)
ARMIJO_CONSTANT = 1e-4
STEP_SHRINK = 0.5
MAX_HALVINGS = 60
LEVENBERG_INITIAL = 1e-8
LEVENBERG_GROWTH = 10.0
LEVENBERG_MAX_TRIES = 30

# Tolerancias por problema
DUAL_GRAD_TOL = 1e-9
PS_GRAD_TOL = 1e-8
THETA_TOL = 1e-6
EE_ROOT_TOL = 1e-10
DEFAULT_MAX_ITER = 100
DEFAULT_MAX_OUTER = 100
OUTER_FD_STEP = 1e-5
KAPPA_FD_STEP = 1e-5
CONSTRAINT_TOL = 1e-7

# Diagnósticos numéricos
SEPARATION_ETA = 30.0
ET_OVERFLOW_NU = 700.0
RANK_CONDITION_MAX = 1e12
TAU_CONDITION_MAX = 1e10
RIDGE_SHIFT = 1e-8
START_SCAN_STEPS = 20

# Inferencia
CI_MULTIPLIER_95 = 1.959964
DEFAULT_CI_LEVEL = 0.95
DEFAULT_SE_METHOD = "sandwich"
DEFAULT_BOOTSTRAP_B = 500
MIN_BOOTSTRAP_B = 50
MAX_FAILURE_RATIO = 0.2

# Laboratorio Monte Carlo
REFERENCE_SEED = 987654321
REFERENCE_ROWS = 1_000_000
SSL_TOTAL_SIZE = 2000
SSL_LABELED_SIZE = 500
CAUSAL_SIZE = 1000
MISSCOV_SIZE = 500
DEFAULT_REPS = 200

# CLI
DEFAULT_ENTROPY = "et"
DEFAULT_FAMILY = "linear"
OUTPUT_SIGNIFICANT_DIGITS = 6
EXIT_CONFIG_ERROR = 2
EXIT_DATA_ERROR = 3
EXIT_NUMERICAL_ERROR = 4
