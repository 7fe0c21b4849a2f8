""" Shared plumbing for the experiment management commands.

    Every command resolves the layered configuration, applies its flags on top, writes a run
    directory holding `config.snapshot` and `manifest.json`, and turns koopnet errors into
    CommandError with the exit code the CLI promises (1 runtime, 2 usage or missing artifact).
"""

import os
import logging

from django.core.exceptions import ImproperlyConfigured
from django.core.management.base import BaseCommand, CommandError

import koopnet
from koopnet import conf
from koopnet.errors import KoopnetError, MissingArtifactError
from koopnet.storage import write_json
from koopnet.utils import ensure_dir, file_sha256, run_root


logger = logging.getLogger("koopnet")

USAGE_ERROR = 2
RUNTIME_ERROR = 1


class ExperimentCommand(BaseCommand):
    requires_system_checks = []

    # option dest -> config path, applied when the option is given
    flag_paths = {}
    # config path of the seed --seed overrides
    seed_path = None

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Experiment YAML file")
        parser.add_argument("--seed", type=int, help="Master seed")
        parser.add_argument(
            "--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
            help="Override a single config value (YAML syntax), may be repeated",
        )
        parser.add_argument("--run-dir", help="Output directory (default: $KOOPNET_RUN_ROOT/<command>)")
        self.add_experiment_arguments(parser)

    def add_experiment_arguments(self, parser):
        pass

    @property
    def command_name(self):
        return self.__module__.rsplit(".", 1)[-1]

    def resolve_config(self, options):
        overrides = {}
        for assignment in options.get("set") or []:
            path, value = conf.parse_assignment(assignment)
            conf.set_path(overrides, path, value)
        if options.get("seed") is not None and self.seed_path:
            conf.set_path(overrides, self.seed_path, options["seed"])
        for dest, path in self.flag_paths.items():
            if options.get(dest) is not None:
                conf.set_path(overrides, path, options[dest])
        return conf.get_config(options.get("config"), overrides)

    def handle(self, *args, **options):
        try:
            config = self.resolve_config(options)
            run_dir = ensure_dir(options.get("run_dir") or os.path.join(run_root(), self.command_name))
            conf.snapshot(config, os.path.join(run_dir, "config.snapshot"))

            self.inputs = {}
            self.outputs = {}
            self.seeds = {}
            self.experiment(config, run_dir, options)
            self.write_manifest(run_dir)
        except (MissingArtifactError, ImproperlyConfigured) as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR)
        except KoopnetError as exc:
            raise CommandError("{}: {}".format(type(exc).__name__, exc), returncode=RUNTIME_ERROR)

    def experiment(self, config, run_dir, options):
        raise NotImplementedError()

    def use_input(self, name, path):
        if not os.path.exists(path):
            raise MissingArtifactError(path, name)
        self.inputs[name] = {"path": path, "sha256": file_sha256(path)}
        return path

    def add_output(self, name, path):
        self.outputs[name] = {"path": path, "sha256": file_sha256(path)}
        return path

    def write_manifest(self, run_dir):
        manifest = {
            "command": self.command_name,
            "version": koopnet.__version__,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }
        write_json(os.path.join(run_dir, "manifest.json"), manifest)
