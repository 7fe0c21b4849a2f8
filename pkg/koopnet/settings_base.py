# Settings used when koopnet runs outside of a host Django project (the `koopnet` console
# script), and a base for projects that want to `from koopnet.settings_base import *`.
import os

SECRET_KEY = 'koopnet-is-not-a-web-application'

DEBUG = False

INSTALLED_APPS = (
    'koopnet',
)

DATABASES = {}

USE_TZ = True

TEST_RUNNER = 'koopnet.test_runner.KoopnetTestSuiteRunner'

# Nested overrides for koopnet.conf.DEFAULT_CONFIG, see docs/configuration.md
KOOPNET_CONFIG = {}

# Where run directories (config snapshot, episode traces, manifest) are written
KOOPNET_RUN_ROOT = os.environ.get("KOOPNET_RUN_ROOT", "runs")

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(levelname)s %(name)s %(message)s'
        }
    },
    'handlers': {
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        }
    },
    'loggers': {
        'koopnet': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        }
    }
}
