"""
Django settings for lfd_tamp project.

The project hosts the `tamp` application: learning action models from
demonstrations and planning manipulation tasks with cross-entropy trajectory
optimization over a PDDL task graph. Everything runs through management
commands; there is no web front end.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
from decouple import config, Csv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used for hashing in contrib apps; no sessions are served.
SECRET_KEY = config("SECRET_KEY", default="lfd-tamp-local-development-key")

DEBUG = config("DEBUG", default=False, cast=bool)

ALLOWED_HOSTS = config("ALLOWED_HOSTS", default="", cast=Csv())


# Application definition

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "django_q",
    "tamp",
]


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

# SQLite by default; set DATABASE_ENGINE=django.db.backends.postgresql for a
# shared experiment database.
DATABASE_ENGINE = config("DATABASE_ENGINE", default="django.db.backends.sqlite3")

if DATABASE_ENGINE.endswith("sqlite3"):
    DATABASES = {
        "default": {
            "ENGINE": DATABASE_ENGINE,
            "NAME": config("DATABASE_NAME", default=str(BASE_DIR / "lfd_tamp.sqlite3")),
        }
    }
else:
    DATABASES = {
        "default": {
            "ENGINE": DATABASE_ENGINE,
            "NAME": config("DATABASE_NAME", default="lfd_tamp_db"),
            "USER": config("DATABASE_USER", default="postgres"),
            "PASSWORD": config("DATABASE_PASSWORD", default=""),
            "HOST": config("DATABASE_HOST", default="localhost"),
            "PORT": config("DATABASE_PORT", default="5432"),
        }
    }


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Logging

LOG_LEVEL = config("LOG_LEVEL", default="INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "simple",
        },
    },
    "loggers": {
        "tamp": {
            "handlers": ["console"],
            "level": LOG_LEVEL,
            "propagate": False,
        },
    },
}


# Planner defaults (overridable per run through a RunConfig file or flags)

TAMP = {
    "SAMPLES": config("TAMP_SAMPLES", default=200, cast=int),
    "STEP_SIZE": config("TAMP_STEP_SIZE", default=0.5, cast=float),
    "HORIZON": config("TAMP_HORIZON", default=5, cast=int),
    "MAX_ITERATIONS": config("TAMP_MAX_ITERATIONS", default=15, cast=int),
    "SEED": config("TAMP_SEED", default=0, cast=int),
    "GMM_COMPONENTS": config("TAMP_GMM_COMPONENTS", default=3, cast=int),
    "REGULARIZATION": config("TAMP_REGULARIZATION", default=1e-6, cast=float),
    "DMP_DT": config("TAMP_DMP_DT", default=0.02, cast=float),
    "DMP_DURATION": config("TAMP_DMP_DURATION", default=2.0, cast=float),
    "PRIOR_FLOOR": config("TAMP_PRIOR_FLOOR", default=1e-3, cast=float),
    "MAX_STATES": config("TAMP_MAX_STATES", default=10000, cast=int),
    # PDDL symbols that carry continuous meaning
    "HOLDING_PREDICATE": config("TAMP_HOLDING_PREDICATE", default="holding"),
    "GRIPPER_PREDICATE": config("TAMP_GRIPPER_PREDICATE", default="hand-occupied"),
    "FRAME_TYPES": config("TAMP_FRAME_TYPES", default="face", cast=Csv()),
}


# Django-Q Configuration
# Trials of an experiment are fanned out to workers through the ORM broker.

Q_CLUSTER = {
    "name": "lfd_tamp",
    "workers": config("Q_WORKERS", default=4, cast=int),
    "recycle": 50,
    "timeout": 3600,
    "retry": 3700,
    "queue_limit": 50,
    "bulk": 1,
    "orm": "default",
    "sync": config("Q_SYNC", default=False, cast=bool),
}
