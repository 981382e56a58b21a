# settings.py - Berwald Hub extremal torsion analysis
import os
import sys
from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='django-insecure-development-key-change-in-production-berwald-hub-0123456789')
DEBUG = config('DEBUG', default=True, cast=bool)

# Application definition
DJANGO_APPS = [
    'django.contrib.contenttypes',
]

LOCAL_APPS = [
    'metrics.apps.MetricsConfig',
    'torsion.apps.TorsionConfig',
    'configurations.apps.ConfigurationsConfig',
]

INSTALLED_APPS = DJANGO_APPS + LOCAL_APPS

# Database Configuration
DATABASES = {
    'default': {
        'ENGINE': config('DB_ENGINE', default='django.db.backends.sqlite3'),
        'NAME': config('DB_NAME', default=str(BASE_DIR / 'berwald.sqlite3')),
        'USER': config('DB_USER', default=''),
        'PASSWORD': config('DB_PASSWORD', default=''),
        'HOST': config('DB_HOST', default=''),
        'PORT': config('DB_PORT', default=''),
    }
}

# Add PostgreSQL-specific options only when using PostgreSQL
if DATABASES['default']['ENGINE'] == 'django.db.backends.postgresql':
    DATABASES['default']['OPTIONS'] = {
        'client_encoding': 'UTF8',
    }

# Internationalization
LANGUAGE_CODE = config('LANGUAGE_CODE', default='en-us')
TIME_ZONE = config('TIME_ZONE', default='UTC')
USE_I18N = True
USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Celery Configuration
CELERY_BROKER_URL = config('CELERY_BROKER_URL', default='redis://localhost:6379/0')
CELERY_RESULT_BACKEND = config('CELERY_RESULT_BACKEND', default='redis://localhost:6379/0')
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = TIME_ZONE
CELERY_TASK_ALWAYS_EAGER = config('CELERY_TASK_ALWAYS_EAGER', default=False, cast=bool)

# Logging Configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': 'INFO',
            'class': 'logging.handlers.RotatingFileHandler',
            'filename': BASE_DIR / 'logs' / 'berwald.log',
            'maxBytes': 1024 * 1024 * 15,  # 15MB
            'backupCount': 10,
            'formatter': 'verbose',
        },
        'console': {
            'level': config('CONSOLE_LOG_LEVEL', default='WARNING'),
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
        'error_file': {
            'level': 'ERROR',
            'class': 'logging.handlers.RotatingFileHandler',
            'filename': BASE_DIR / 'logs' / 'errors.log',
            'maxBytes': 1024 * 1024 * 15,  # 15MB
            'backupCount': 10,
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['file', 'console'],
            'level': 'INFO',
            'propagate': True,
        },
        'metrics': {
            'handlers': ['file', 'console'],
            'level': 'DEBUG',
            'propagate': True,
        },
        'torsion': {
            'handlers': ['file', 'console'],
            'level': 'DEBUG',
            'propagate': True,
        },
        'configurations': {
            'handlers': ['file', 'console'],
            'level': 'INFO',
            'propagate': True,
        },
    },
    'root': {
        'handlers': ['error_file'],
        'level': 'ERROR',
    },
}

# Custom Berwald Hub Settings
BERWALD_SETTINGS = {
    # Worker pool
    'THREADS': config('BERWALD_THREADS', default=1, cast=int),

    # Metric and quadrature limits
    'MAX_DIMENSION': config('BERWALD_MAX_DIMENSION', default=6, cast=int),
    'DEFAULT_LEVELS': {
        2: config('BERWALD_LEVEL_2D', default=32, cast=int),
        3: config('BERWALD_LEVEL_3D', default=30, cast=int),
        'higher': config('BERWALD_LEVEL_HIGHER', default=8, cast=int),
    },
    'VALIDATION_SAMPLES': config('BERWALD_VALIDATION_SAMPLES', default=64, cast=int),

    # Finite differences
    'CHRISTOFFEL_STEP_FACTOR': config('BERWALD_CHRISTOFFEL_STEP_FACTOR', default=1e-5, cast=float),
    'CANCELLATION_TOLERANCE': config('BERWALD_CANCELLATION_TOLERANCE', default=1e-4, cast=float),

    # Solver tolerances
    'RANK_RTOL': config('BERWALD_RANK_RTOL', default=1e-8, cast=float),
    'DEGENERACY_THRESHOLD': config('BERWALD_DEGENERACY_THRESHOLD', default=1e-10, cast=float),
    'CONDITION_LIMIT': config('BERWALD_CONDITION_LIMIT', default=1e12, cast=float),
    'RESIDUAL_THRESHOLD_ANALYTIC': config('BERWALD_RESIDUAL_THRESHOLD_ANALYTIC', default=1e-6, cast=float),
    'RESIDUAL_THRESHOLD_NUMERIC': config('BERWALD_RESIDUAL_THRESHOLD_NUMERIC', default=1e-4, cast=float),
}

# Testing Configuration
if 'test' in sys.argv or 'pytest' in sys.modules:
    DATABASES['default'] = {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': ':memory:'
    }

    CELERY_TASK_ALWAYS_EAGER = True
    CELERY_BROKER_URL = 'memory://'
    CELERY_RESULT_BACKEND = 'cache+memory://'

    # Disable migrations for faster tests
    class DisableMigrations:
        def __contains__(self, item):
            return True

        def __getitem__(self, item):
            return None


    MIGRATION_MODULES = DisableMigrations()

# Ensure logs directory exists
if not (BASE_DIR / 'logs').exists():
    os.makedirs(BASE_DIR / 'logs', exist_ok=True)
