""" Rician fading link statistics: gain sampling, SNR, outage probability through the first
    order Marcum Q-function, minimum-power allocation and Bernoulli delivery.

    All arithmetic is in linear units; conversion from dB happens in ChannelParams.from_config.
"""

import math
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import ive
from django.core.exceptions import ImproperlyConfigured

from koopnet.errors import BracketingError, InvalidPowerError


logger = logging.getLogger("koopnet")

LINKS = ("sc", "ca")

MARCUM_TOLERANCE = 1e-10
_MARCUM_CHUNK = 64
_MARCUM_MAX_TERMS = 200000


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm):
    return 10.0 ** (dbm / 10.0) / 1000.0


@dataclass(frozen=True)
class ChannelParams:
    kappa: float
    n0: float  # W/Hz
    bandwidth: float  # Hz
    gamma0: float  # linear
    outage_target: float

    def __post_init__(self):
        if self.kappa < 0:
            raise ImproperlyConfigured("kappa must be >= 0")
        if not (self.n0 > 0 and self.bandwidth > 0 and self.gamma0 > 0):
            raise ImproperlyConfigured("n0, bandwidth and gamma0 must be positive")
        if not 0 < self.outage_target < 1:
            raise ImproperlyConfigured("outage_target must lie in (0, 1)")

    @property
    def noise_power(self):
        return self.n0 * self.bandwidth

    @classmethod
    def from_config(cls, config, link=None):
        section = dict(config["channel"])
        links = section.pop("links", {}) or {}
        if link is not None:
            if link not in LINKS:
                raise ImproperlyConfigured("Unknown link '{}'".format(link))
            section.update(links.get(link) or {})

        return cls(
            kappa=float(section["kappa"]),
            n0=dbm_to_watts(float(section["n0_dbm_per_hz"])),
            bandwidth=float(section["bandwidth_hz"]),
            gamma0=db_to_linear(float(section["gamma0_db"])),
            outage_target=float(section["outage_target"]),
        )


@dataclass(frozen=True)
class LinkBudget:
    power: float
    outage: float


def sample_gain(kappa, rng, size=None):
    """ h = sqrt(κ/(1+κ)) e^{jφ} + sqrt(1/(1+κ)) h̃ with E[|h|²] = 1. """
    los = math.sqrt(kappa / (1.0 + kappa))
    scatter = math.sqrt(1.0 / (1.0 + kappa))
    phase = rng.uniform(0.0, 2.0 * math.pi, size=size)
    h_tilde = (rng.standard_normal(size=size) + 1j * rng.standard_normal(size=size)) / math.sqrt(2.0)
    return los * np.exp(1j * phase) + scatter * h_tilde


def snr(p, h, n0, bandwidth):
    return p * np.abs(h) ** 2 / (n0 * bandwidth)


def _bessel_series(ratio, x, first_k):
    """ Σ_{k >= first_k} ratio^k · I_k(x)·e^{-x}, summed in chunks until the terms are past
        their peak (k > x) and below tolerance. ratio <= 1 so the tail is dominated by the last
        chunk.
    """
    total = 0.0
    k = first_k
    while k < _MARCUM_MAX_TERMS:
        ks = np.arange(k, k + _MARCUM_CHUNK, dtype=float)
        with np.errstate(under="ignore"):
            terms = np.power(ratio, ks) * ive(ks, x)
        total += float(terms.sum())
        k += _MARCUM_CHUNK
        if k > x and terms[-1] <= MARCUM_TOLERANCE * 1e-3:
            break
    return total


def marcum_q1(a, b):
    """ First order Marcum Q-function Q1(a, b), truncation error below 1e-10. """
    a = float(a)
    b = float(b)
    if a < 0 or b < 0:
        raise ValueError("marcum_q1 requires a >= 0 and b >= 0")
    if b == 0.0:
        return 1.0
    if a == 0.0:
        return math.exp(-b * b / 2.0)

    x = a * b
    scale = math.exp(-(a - b) ** 2 / 2.0)
    if a < b:
        value = scale * _bessel_series(a / b, x, 0)
    else:
        value = 1.0 - scale * _bessel_series(b / a, x, 1)
    return min(max(value, 0.0), 1.0)


def outage_prob(p, params):
    if not p > 0:
        raise InvalidPowerError("Transmission power must be positive, got {}".format(p))
    a = math.sqrt(2.0 * params.kappa)
    b = math.sqrt(2.0 * (1.0 + params.kappa) * params.gamma0 * params.noise_power / p)
    return 1.0 - marcum_q1(a, b)


def required_power(params, rtol=1e-6):
    """ Smallest power meeting outage_prob(p) <= outage_target, found by geometric bisection. """
    target = params.outage_target
    reference = params.gamma0 * params.noise_power
    low, high = reference * 1e-3, reference * 1e3

    for _ in range(60):
        if outage_prob(low, params) > target:
            break
        low /= 10.0
    else:
        raise BracketingError("No power below target found", low=low, high=high)

    for _ in range(60):
        if outage_prob(high, params) <= target:
            break
        high *= 10.0
    else:
        raise BracketingError(
            "Outage target {} unreachable up to {:g} W".format(target, high), low=low, high=high
        )

    while (high - low) > rtol * high:
        middle = math.sqrt(low * high)
        if outage_prob(middle, params) <= target:
            high = middle
        else:
            low = middle

    budget = LinkBudget(power=high, outage=outage_prob(high, params))
    logger.debug("Allocated %.6g W for outage target %g (achieved %.6g)", budget.power, target, budget.outage)
    return budget


def transmit(p, params, rng):
    """ One packet over the link: True if the sampled SNR reaches gamma0. Draws a gain even
        when p <= 0.
    """
    h = sample_gain(params.kappa, rng)
    if p <= 0:
        return False
    return bool(snr(p, h, params.n0, params.bandwidth) >= params.gamma0)
