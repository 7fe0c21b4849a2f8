import os
import hashlib

import numpy as np
from django.conf import settings


def rng_stream(seed, *keys):
    """ Returns an independent numpy Generator for (seed, *keys). Episodes, links and noise
        sources each get their own stream so results don't depend on evaluation order.
    """
    entropy = [int(seed)] + [int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def run_root():
    return getattr(settings, "KOOPNET_RUN_ROOT", None) or os.environ.get("KOOPNET_RUN_ROOT", "runs")


def ensure_dir(path):
    if path and not os.path.isdir(path):
        os.makedirs(path)
    return path


def file_sha256(path, block_size=1 << 20):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        while True:
            block = f.read(block_size)
            if not block:
                break
            digest.update(block)
    return digest.hexdigest()


def format_float(value):
    """ 17 significant digits round-trips a float64 exactly, which keeps CSVs byte-stable. """
    return "%.17g" % value


def parse_float_list(text):
    if text is None:
        return []
    text = text.strip()
    if not text:
        return []
    return [float(v) for v in text.split(",") if v.strip()]


def parse_int_list(text):
    return [int(v) for v in parse_float_list(text)]
