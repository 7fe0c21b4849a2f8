import shutil
import tempfile
import contextlib

import numpy as np
from django import test
from django.test.utils import override_settings

from koopnet.conf import DEFAULT_CONFIG, merge
from koopnet.errmodel import ErrorPolyCoeffs
from koopnet.koopman import KoopmanModel
from koopnet.utils import rng_stream


@contextlib.contextmanager
def temporary_run_root():
    """ Points KOOPNET_RUN_ROOT at a scratch directory for the duration of the block. """
    root = tempfile.mkdtemp(prefix="koopnet-")
    try:
        with override_settings(KOOPNET_RUN_ROOT=root):
            yield root
    finally:
        shutil.rmtree(root, ignore_errors=True)


def quiet_config(**sections):
    """ Default configuration without process noise, merged with per-section overrides. """
    config = merge(DEFAULT_CONFIG, {"noise": {"scale": 0.0}})
    return merge(config, sections)


def small_model(kind="proposed", state_dim=4, action_dim=2, embedding=4, hidden=(8,), seed=0, u_max=5.0):
    return KoopmanModel.initialise(
        kind, state_dim, action_dim, embedding, list(hidden), list(hidden), rng_stream(seed, 99), u_max=u_max
    )


def linear_coeffs(norm_weight=0.0, beta_weight=0.0):
    return ErrorPolyCoeffs(alpha=np.array([norm_weight, beta_weight, 0.0, 0.0, 0.0]), degree=2)


class TestCase(test.SimpleTestCase):
    def assertArrayEqual(self, first, second):
        np.testing.assert_array_equal(first, second)

    def assertArrayAlmostEqual(self, first, second, rtol=1e-7, atol=0.0):
        np.testing.assert_allclose(first, second, rtol=rtol, atol=atol)
