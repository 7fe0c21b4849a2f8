"""
Django settings for the koopnet test project.

Only used to run the test-suite (`./runtests.sh`) and as an example of hosting the koopnet
management commands inside a project.
"""
import os
import tempfile

from koopnet.settings_base import *  # noqa

BASE_DIR = os.path.dirname(os.path.dirname(__file__))

SECRET_KEY = 'koopnet-testapp-not-secret'

DEBUG = True

INSTALLED_APPS = (
    'koopnet',
    'testapp',
)

TIME_ZONE = 'UTC'

KOOPNET_RUN_ROOT = tempfile.mkdtemp(prefix='koopnet_runs_')

KOOPNET_ADDITIONAL_TEST_APPS = ("koopnet",)

LOGGING['loggers']['koopnet']['level'] = 'WARNING'  # noqa
