# Test wiring for running the suite under pytest: mirrors testapp/manage.py so the
# koopnet tests see the same Django settings as `./runtests.sh`.
import os
import sys

_TESTAPP = os.path.join(os.path.dirname(os.path.abspath(__file__)), "testapp")
if _TESTAPP not in sys.path:
    sys.path.insert(0, _TESTAPP)

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "testapp.settings")

import django  # noqa: E402

django.setup()
