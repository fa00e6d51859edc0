import os
from pathlib import Path

from dotenv import load_dotenv

from config import constants

BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / '.env')

LOGS_DIR = BASE_DIR / 'logs'
LOGS_DIR.mkdir(exist_ok=True)

SECRET_KEY = os.getenv("SECRET_KEY", "gecal-local-key-not-used-for-anything-served")

DEBUG = os.getenv("DEBUG", "False").lower() == "true"

ALLOWED_HOSTS = []

PROPIAS = [
    "core",
    "modelos",
    "calibracion",
    "aplicaciones",
    "simulacion",
]

INSTALLED_APPS = PROPIAS

# Sin vistas ni persistencia: la base sólo existe para que el runner de tests arranque.
DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": BASE_DIR / "db.sqlite3",
    }
}

USE_TZ = True
TIME_ZONE = "America/Argentina/Buenos_Aires"
DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Paralelismo (joblib). Con 1 worker todo corre en el proceso actual.
GECAL_N_JOBS = int(os.getenv("GECAL_N_JOBS", "1"))

# Tamaño de la muestra de referencia para los coeficientes verdaderos bajo OR2
GECAL_REFERENCE_ROWS = int(os.getenv("GECAL_REFERENCE_ROWS", str(constants.REFERENCE_ROWS)))

# Los tests Monte Carlo de aceptación tardan minutos; se activan a pedido.
GECAL_RUN_SLOW_TESTS = os.getenv("GECAL_RUN_SLOW_TESTS", "0").lower() in ("1", "true", "yes")

GECAL_LOG_LEVEL = os.getenv("GECAL_LOG_LEVEL", "INFO").upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': 'WARNING',
            'class': 'logging.handlers.RotatingFileHandler',
            'filename': LOGS_DIR / 'gecal.log',
            'formatter': 'verbose',
            'maxBytes': 10 * 1024 * 1024,
            'backupCount': 5,
        },
        'console': {
            'level': GECAL_LOG_LEVEL,
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console', 'file'],
        'level': GECAL_LOG_LEVEL,
    },
    'loggers': {
        'django': {
            'handlers': ['console', 'file'],
            'level': 'WARNING',
            'propagate': False,
        },
    },
}
