""" Entry point of the `koopnet` console script.

    Runs the experiment management commands without a host Django project, configuring
    settings from koopnet.settings_base unless DJANGO_SETTINGS_MODULE is set:

        koopnet gen-data --traj 200 --steps 500
        koopnet train --epochs 30
        koopnet fit-error --samples 10000
        koopnet run --config experiment.yaml --seed 7
        koopnet sweep --axis outage --values 1e-4,1e-3,1e-2,1e-1
"""

import os
import sys
import logging

import django
from django.conf import settings
from django.core.management import load_command_class


COMMANDS = ("gen_data", "train", "fit_error", "run", "sweep")

USAGE = "usage: koopnet {gen-data,train,fit-error,run,sweep} [options]"


def configure_settings():
    if settings.configured or os.environ.get("DJANGO_SETTINGS_MODULE"):
        return
    from koopnet import settings_base
    settings.configure(**{
        name: getattr(settings_base, name) for name in dir(settings_base) if name.isupper()
    })


def cli_main(argv=None):
    """ Dispatches to a management command and returns the process exit code: 0 ok,
        1 runtime error, 2 usage error or missing artifact.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        sys.stdout.write(USAGE + "\n")
        return 0 if argv else 2

    name = argv[0].replace("-", "_")
    if name not in COMMANDS:
        sys.stderr.write("Unknown command '{}'\n{}\n".format(argv[0], USAGE))
        return 2

    configure_settings()
    django.setup()

    command = load_command_class("koopnet", name)
    try:
        command.run_from_argv(["koopnet", name] + argv[1:])
    except SystemExit as exc:
        # CommandError and argparse errors both end up here
        return exc.code if isinstance(exc.code, int) else 1
    except Exception:
        logging.getLogger("koopnet").exception("Command %s failed", argv[0])
        return 1
    return 0


def main():
    sys.exit(cli_main())
