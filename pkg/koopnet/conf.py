""" Experiment configuration.

    The resolved configuration is a nested dict built from (later wins):

      1. DEFAULT_CONFIG below,
      2. settings.KOOPNET_CONFIG,
      3. an experiment YAML file,
      4. explicit overrides (command-line flags).

    Modules turn the relevant section into their own typed parameters (see the `from_config`
    classmethods); nothing else reads the raw dict.
"""

import copy
import os

import yaml
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

from koopnet.errors import MissingArtifactError


DEFAULT_CONFIG = {
    "plant": {
        "kind": "double_pendulum",  # or "cartpole"
        "input_nonlinearity": "tanh",  # or "cubic"
        "dt": 0.02,
        "u_max": None,  # None -> plant default (5 N.m pendulum, 10 N cartpole)
        "params": {
            "m1": 2.0, "m2": 2.0,
            "j1": 0.5, "j2": 0.5,
            "g": 10.0,
            "spring_length": 0.5,
            "b": 0.4,
            "k": 2.0,
            "s": 0.5,
        },
        "cartpole": {
            "gravity": 9.8,
            "masscart": 1.0,
            "masspole": 0.1,
            "length": 0.5,
        },
    },
    "noise": {
        "scale": 1e-4,  # N = scale * I
        "covariance": None,  # explicit D x D matrix wins over scale
    },
    "channel": {
        "kappa": 10.0,
        "n0_dbm_per_hz": -168.0,
        "bandwidth_hz": 2.4e9,
        "gamma0_db": 20.0,
        "outage_target": 1e-3,
        "links": {
            "sc": {},
            "ca": {},
        },
    },
    "dataset": {
        "trajectories": 200,
        "steps": 500,
        "seed": 0,
        "state_box": None,  # None -> plant default box
    },
    "model": {
        "kind": "proposed",  # proposed, dkuc, dkac
        "state_embedding": 20,
        "hidden": [64, 64],
        "action_hidden": [64, 64],
    },
    "training": {
        "horizon": 10,
        "batch_size": 1000,
        "lr": 1e-3,
        "epochs": 30,
        "seed": 0,
    },
    "control": {
        "Q": None,  # None -> plant default weights
        "B": None,
        "x0": None,
        "horizon": 10,
        "tol": 1e-10,
        "max_iter": 10000,
        "require_stable": True,
    },
    "errmodel": {
        "samples": 10000,
        "beta_max": 30,
        "degrees": [1, 2, 3],
        "degree": 2,  # or "auto": lowest held-out residual among `degrees`
        "holdout": 0.2,
        "seed": 0,
        "state_box": None,
    },
    "scheduler": {
        "V": 10.0,
        "lam": 1.0,
        "delta": 0.3,
        "sensing_power": 1e-5,
        "initial_battery": 1.0,
        "recharge_period": None,  # None -> never recharged within a run
    },
    "episode": {
        "slots": 1000,
        "episodes": 100,
        "seed": 0,
        "controller": "proposed",  # proposed, dkuc, dkac
        "fallback": "cache",  # cache, b1-zero, b2-hold
        "state_box": None,
        "ca_failures": None,  # {"start": int, "length": int, "every": int or None}
        "sc_blocked": False,
        "force_schedule": False,
        "workers": 1,
    },
    "artifacts": {
        "dataset": "artifacts/dataset.npz",
        "model": "artifacts/model.npz",
        "coeffs": "artifacts/coeffs.csv",
    },
}


def merge(base, overrides):
    """ Recursively merges `overrides` into a copy of `base`. """
    result = copy.deepcopy(base)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = merge(result[key], value)
        else:
            result[key] = copy.deepcopy(value)
    return result


def set_path(config, path, value):
    """ Sets config["a"]["b"] for path "a.b", creating intermediate sections. """
    parts = path.split(".")
    node = config
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ImproperlyConfigured("Config key {} is not a section".format(part))
    node[parts[-1]] = value
    return config


def parse_assignment(text):
    """ Parses a `section.key=value` override, the value is YAML so numbers/lists work. """
    if "=" not in text:
        raise ImproperlyConfigured("Expected section.key=value, got '{}'".format(text))
    path, raw = text.split("=", 1)
    return path.strip(), yaml.safe_load(raw)


def load_yaml(path):
    if not os.path.exists(path):
        raise MissingArtifactError(path, "config file")
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ImproperlyConfigured("Config file {} must contain a mapping".format(path))
    return data


def get_config(path=None, overrides=None):
    config = merge(DEFAULT_CONFIG, getattr(settings, "KOOPNET_CONFIG", {}))
    if path:
        config = merge(config, load_yaml(path))
    config = merge(config, overrides)
    validate(config)
    return config


def validate(config):
    unknown = set(config) - set(DEFAULT_CONFIG)
    if unknown:
        raise ImproperlyConfigured("Unknown config sections: {}".format(", ".join(sorted(unknown))))

    if config["plant"]["kind"] not in ("double_pendulum", "cartpole"):
        raise ImproperlyConfigured("plant.kind must be double_pendulum or cartpole")
    if config["plant"]["input_nonlinearity"] not in ("tanh", "cubic"):
        raise ImproperlyConfigured("plant.input_nonlinearity must be tanh or cubic")
    if config["model"]["kind"] not in ("proposed", "dkuc", "dkac"):
        raise ImproperlyConfigured("model.kind must be proposed, dkuc or dkac")
    if config["episode"]["controller"] not in ("proposed", "dkuc", "dkac"):
        raise ImproperlyConfigured("episode.controller must be proposed, dkuc or dkac")
    if config["episode"]["fallback"] not in ("cache", "b1-zero", "b2-hold"):
        raise ImproperlyConfigured("episode.fallback must be cache, b1-zero or b2-hold")
    if int(config["training"]["horizon"]) < 1:
        raise ImproperlyConfigured("training.horizon must be >= 1")
    if int(config["control"]["horizon"]) < 1:
        raise ImproperlyConfigured("control.horizon must be >= 1")
    if config["errmodel"]["degree"] not in (1, 2, 3, "auto"):
        raise ImproperlyConfigured("errmodel.degree must be 1, 2, 3 or auto")


def snapshot(config, path):
    with open(path, "w") as f:
        yaml.safe_dump(config, f, default_flow_style=False, sort_keys=True)
