"""
Django settings for the motkit project.

The toolkit runs as management commands; the database holds run manifests
and the django-q task results.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/3.2/ref/settings/
"""

import environ

ROOT_DIR = environ.Path(__file__) - 2
PROJ_DIR = ROOT_DIR.path("motkit")

env = environ.Env()

# GENERAL
# ------------------------------------------------------------------------------

# https://docs.djangoproject.com/en/dev/ref/settings/#debug
DEBUG = env.bool("DJANGO_DEBUG", False)

# Only used to sign django-q task payloads.
SECRET_KEY = env("DJANGO_SECRET_KEY", default="motkit-not-secret")

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "motkit.core.apps.CoreConfig",
    "django.contrib.contenttypes",
    "django.contrib.auth",
    "rest_framework",
    "django_q",
]

# Database
# https://docs.djangoproject.com/en/3.2/ref/settings/#databases
DATABASES = {
    "default": env.db("DATABASE_URL", default=f"sqlite:///{ROOT_DIR('motkit.sqlite3')}")
}

DEFAULT_AUTO_FIELD = "django.db.models.AutoField"


# Internationalization
# https://docs.djangoproject.com/en/3.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


# Pipeline
# ------------------------------------------------------------------------------

# Pipeline config file used when a command gets no --config.
MOTKIT_CONFIG = env.str("MOTKIT_CONFIG", str(ROOT_DIR.path("config", "defaults.cfg")))
# django-q workers, one sequence each
MOTKIT_WORKERS = env.int("MOTKIT_WORKERS", 1)
# How long a command waits for a queued sequence task to finish
MOTKIT_TASK_WAIT_MS = env.int("MOTKIT_TASK_WAIT_MS", 30 * 60 * 1000)

LOG_LEVEL = env.str("LOG_LEVEL", "INFO")

import logging.config

LOGGING_CONFIG = None
logging.config.dictConfig(
    {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "console": {
                # exact format is not important, this is the minimum information
                "format": "%(asctime)s %(name)-12s %(levelname)-8s %(message)s",
            },
        },
        "handlers": {
            "console": {"class": "logging.StreamHandler", "formatter": "console",},
        },
        "loggers": {
            # root logger
            "": {"level": LOG_LEVEL, "handlers": ["console"],},
        },
    }
)


# https://www.django-rest-framework.org/api-guide/settings/
REST_FRAMEWORK = {
    "DEFAULT_RENDERER_CLASSES": ("rest_framework.renderers.JSONRenderer",),
    "COERCE_DECIMAL_TO_STRING": False,
}

# https://django-q.readthedocs.io/en/latest/
# Sequences run inline unless a qcluster is started with DJANGO_Q_SYNC=False.
DJANGO_Q_SYNC = env.bool("DJANGO_Q_SYNC", True)
Q_CLUSTER = {
    "name": "motkit",
    "workers": MOTKIT_WORKERS,
    "timeout": MOTKIT_TASK_WAIT_MS // 1000,
    "retry": MOTKIT_TASK_WAIT_MS // 1000 + 60,
    "max_attempts": 1,  # Only try a task once
    "orm": "default",  # Use Django ORM as storage backend
    "poll": 1,
    "save_limit": 0,  # commands fetch every result
    "ack_failures": True,  # Dequeue failed tasks
    "catch_up": False,
    "sync": DJANGO_Q_SYNC,
}

# Do NOT use this for feature flags. Just use it to tell the outside world
# which environment messages e.g. logs or errors are coming from.
ENVIRONMENT = env.str("ENVIRONMENT", "development")

SENTRY_DSN = env.str("SENTRY_DSN", None)
SENTRY_PERF_SAMPLE_RATE = env.float("SENTRY_PERF_SAMPLE_RATE", 0.1)

if SENTRY_DSN:
    import sentry_sdk
    from sentry_sdk.integrations.django import DjangoIntegration

    sentry_sdk.init(
        dsn=SENTRY_DSN,
        integrations=[DjangoIntegration()],
        traces_sample_rate=SENTRY_PERF_SAMPLE_RATE,
        environment=ENVIRONMENT,
    )
