# Settings for the BAD-PODS simulator
# Django is used here as the command framework, settings registry and test
# runner. There is no web surface and no database.

from pathlib import Path
import os
from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('SECRET_KEY', 'badpods-local-only')

DEBUG = os.getenv('DEBUG') == 'True'

ALLOWED_HOSTS = []

# ========================================
# INSTALLED APPS
# ========================================

INSTALLED_APPS = [
    'ssm.apps.SsmConfig',
    'filtering.apps.FilteringConfig',
    'eig.apps.EigConfig',
    'design.apps.DesignConfig',
    'testbeds.apps.TestbedsConfig',
    'experiments.apps.ExperimentsConfig',
]

DATABASES = {}

TEST_RUNNER = 'config.test_runner.BadpodsTestRunner'

# ========================================
# SIMULATOR DEFAULTS
# ========================================

# Where `run`, `static` and `report` write artifacts unless --out is given
OUTPUT_DIR = Path(os.getenv('BADPODS_OUTPUT_DIR', BASE_DIR / 'results'))

# Seed-level parallelism for `run` when --jobs is not given
DEFAULT_JOBS = int(os.getenv('BADPODS_JOBS', '1'))

# Outer samples per evidence block; bounds memory at chunk * M * N densities
EIG_CHUNK_SIZE = int(os.getenv('BADPODS_EIG_CHUNK', '64'))

# Static optimisation refuses horizons whose density-evaluation count exceeds this
STATIC_COST_CAP = float(os.getenv('BADPODS_STATIC_COST_CAP', '5e12'))

# Tests tagged `slow` (desk-scale orderings) only run when this is set
RUN_SLOW_TESTS = os.getenv('BADPODS_SLOW_TESTS') == 'True'

PRESETS_DIR = BASE_DIR / 'presets'

# ========================================
# LOGGING CONFIGURATION
# ========================================

LOGS_DIR = BASE_DIR / 'logs'
LOGS_DIR.mkdir(exist_ok=True)

LOG_LEVEL = os.getenv('BADPODS_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {name} {process:d} {message}',
            'style': '{',
        },
        'inference': {
            'format': '[INFERENCE] {levelname} {asctime} - {message}',
            'style': '{',
        },
        'experiments': {
            'format': '[EXPERIMENT] {levelname} {asctime} - {message}',
            'style': '{',
        },
    },
    'handlers': {
        'inference_file': {
            'level': 'WARNING',
            'class': 'logging.FileHandler',
            'filename': LOGS_DIR / 'inference.log',
            'formatter': 'inference',
        },
        'design_file': {
            'level': 'INFO',
            'class': 'logging.FileHandler',
            'filename': LOGS_DIR / 'design.log',
            'formatter': 'verbose',
        },
        'models_file': {
            'level': 'INFO',
            'class': 'logging.FileHandler',
            'filename': LOGS_DIR / 'models.log',
            'formatter': 'verbose',
        },
        'experiments_file': {
            'level': 'INFO',
            'class': 'logging.FileHandler',
            'filename': LOGS_DIR / 'experiments.log',
            'formatter': 'experiments',
        },
        'console': {
            'level': LOG_LEVEL,
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'badpods.inference': {
            'handlers': ['inference_file', 'console'],
            'level': 'WARNING',
            'propagate': False,
        },
        'badpods.design': {
            'handlers': ['design_file', 'console'],
            'level': 'INFO',
            'propagate': False,
        },
        'badpods.models': {
            'handlers': ['models_file', 'console'],
            'level': 'INFO',
            'propagate': False,
        },
        'badpods.experiments': {
            'handlers': ['experiments_file', 'console'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}

# ========================================
# INTERNATIONALIZATION
# ========================================

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True
