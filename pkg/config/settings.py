"""
Django settings for the view synthesis project.

The web stack is not used; Django provides configuration, the run-history
database and the management-command CLI.
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('SECRET_KEY', 'django-insecure-fallback-key-for-dev')

DEBUG = os.getenv('DEBUG', 'True').lower() in ('true', '1', 'yes')

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    # Local apps
    'synthesis',
]


# Database
# SQLite keeps desk runs self-contained; set DB_ENGINE=postgresql for a shared run history.

if os.getenv('DB_ENGINE', 'sqlite').lower() == 'postgresql':
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.postgresql',
            'NAME': os.getenv('DB_NAME', 'viewsynth_db'),
            'USER': os.getenv('DB_USER', 'postgres'),
            'PASSWORD': os.getenv('DB_PASSWORD', ''),
            'HOST': os.getenv('DB_HOST', 'localhost'),
            'PORT': os.getenv('DB_PORT', '5432'),
        }
    }
else:
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': os.getenv('DB_NAME', str(BASE_DIR / 'viewsynth.sqlite3')),
        }
    }


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Default primary key field type

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'stage': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'stage',
        },
    },
    'loggers': {
        'core': {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False},
        'synthesis': {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False},
    },
}


# Synthesis pipeline defaults (overridden by config files, then by command-line flags)

VIEWSYNTH_OUTPUT_DIR = os.getenv('VIEWSYNTH_OUTPUT_DIR', str(BASE_DIR / 'runs'))

VIEWSYNTH_SEED = int(os.getenv('VIEWSYNTH_SEED', '0'))

VIEWSYNTH_WORKERS = int(os.getenv('VIEWSYNTH_WORKERS', '1'))

VIEWSYNTH_RECORD_RUNS = os.getenv('VIEWSYNTH_RECORD_RUNS', 'True').lower() in ('true', '1', 'yes')

# Per-frame synthesis budget in milliseconds at the desk-scale novel resolution.
VIEWSYNTH_FRAME_BUDGET_MS = float(os.getenv('VIEWSYNTH_FRAME_BUDGET_MS', '33.0'))
