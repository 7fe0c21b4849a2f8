""" Drift-plus-penalty sensor scheduling.

    Each slot the scheduler picks (a, Γ) with a <= Γ <= 1 minimising

        V·Γ + Q_a(a - Γ) - p_b(a·p_SC + p_s) + β_prev(1 - a)

    subject to the prediction-error constraint (skipping is only allowed while the surrogate
    error of a one-step-older estimate stays within δ) and the battery budget. The objective is
    linear in a and Γ, so the optimum sits on a vertex of {a <= Γ <= 1} and enumerating
    (0, 0), (0, 1), (1, 1) is exact.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from django.core.exceptions import ImproperlyConfigured

from koopnet.errmodel import FEATURE_EXPONENTS, eval_error


logger = logging.getLogger("koopnet")

CANDIDATES = ((0, 0.0), (0, 1.0), (1, 1.0))


@dataclass
class SchedulerState:
    queue: float = 0.0
    aoi: int = 0
    battery: float = 1.0
    x_last: np.ndarray = None
    t: int = 0

    def __post_init__(self):
        if self.queue < 0 or self.aoi < 0 or self.battery < 0:
            raise ValueError("Queue, AoI and battery must be non-negative")


@dataclass(frozen=True)
class SchedulerConfig:
    V: float = 10.0
    lam: float = 1.0
    delta: float = 0.3
    sensing_power: float = 1e-5
    initial_battery: float = 1.0
    recharge_period: int = None

    def __post_init__(self):
        if self.V < 0:
            raise ImproperlyConfigured("scheduler.V must be >= 0")
        if not self.delta > 0:
            raise ImproperlyConfigured("scheduler.delta must be > 0")
        if self.sensing_power < 0 or self.initial_battery < 0:
            raise ImproperlyConfigured("scheduler powers must be >= 0")
        if self.recharge_period is not None and self.recharge_period < 1:
            raise ImproperlyConfigured("scheduler.recharge_period must be >= 1")

    @classmethod
    def from_config(cls, config):
        section = config["scheduler"]
        period = section.get("recharge_period")
        return cls(
            V=float(section["V"]),
            lam=float(section["lam"]),
            delta=float(section["delta"]),
            sensing_power=float(section["sensing_power"]),
            initial_battery=float(section["initial_battery"]),
            recharge_period=int(period) if period is not None else None,
        )


@dataclass(frozen=True)
class Decision:
    a: int
    gamma: float
    objective: float
    a0_feasible: bool
    battery_ok: bool
    starved: bool
    error: float  # surrogate error if this slot is skipped


def aoi_update(beta_prev, a):
    return 1 + (1 - a) * beta_prev


def queue_update(queue, a, gamma):
    return max(queue - gamma, 0.0) + a


def battery_update(battery, a, p_sc, p_s, t, recharge_period, initial_battery):
    if recharge_period and (t + 1) % recharge_period == 0:
        return initial_battery
    return max(battery - a * p_sc - p_s, 0.0)


def drift_penalty_objective(state, a, gamma, cfg, p_sc):
    return (
        cfg.V * gamma
        + state.queue * (a - gamma)
        - state.battery * (a * p_sc + cfg.sensing_power)
        + state.aoi * (1 - a)
    )


def lyapunov(state):
    return 0.5 * (state.battery ** 2 + state.aoi ** 2 + state.queue ** 2)


def _norm(x):
    return float(np.linalg.norm(x)) if x is not None else 0.0


def a0_feasible(coeffs, x_last, beta_prev, delta):
    return eval_error(coeffs, _norm(x_last), 1 + beta_prev) <= delta


def constraint_coefficients(coeffs, norm, beta_prev, delta):
    """ Coefficients of ε(‖x‖, 1 + (1 - a)β_prev) - δ as a polynomial in a, highest power first,
        always four entries (a³, a², a, 1). For the degree-2 surrogate the last three are the
        (c1, c2, c3) of c1·a² + c2·a + c3 <= 0. The clamp at zero is not applied here.
    """
    beta = Polynomial([1.0 + beta_prev, -float(beta_prev)])
    total = Polynomial([-float(delta)])
    for alpha, (pn, pb) in zip(coeffs.alpha, FEATURE_EXPONENTS[coeffs.degree]):
        total = total + alpha * norm ** pn * beta ** pb
    values = np.zeros(4)
    lowest_first = total.coef
    values[:len(lowest_first)] = lowest_first
    return values[::-1]


def decide(state, cfg, coeffs, p_sc):
    """ Vertex enumeration of the per-slot problem. If neither skipping nor scheduling is
        feasible the slot is skipped and flagged as starved.
    """
    error = eval_error(coeffs, _norm(state.x_last), 1 + state.aoi)
    can_skip = error <= cfg.delta
    can_send = state.battery >= p_sc + cfg.sensing_power

    best = None
    for a, gamma in CANDIDATES:
        if (a == 0 and not can_skip) or (a == 1 and not can_send):
            continue
        value = drift_penalty_objective(state, a, gamma, cfg, p_sc)
        if best is None or value < best[2]:
            best = (a, gamma, value)

    starved = best is None
    if starved:
        best = (0, 0.0, drift_penalty_objective(state, 0, 0.0, cfg, p_sc))
        logger.warning("Slot %d starved: prediction error %.4g above %.4g with battery %.4g",
                       state.t, error, cfg.delta, state.battery)

    if logger.isEnabledFor(logging.DEBUG):
        logger.debug("Slot %d constraint coefficients %s", state.t,
                     constraint_coefficients(coeffs, _norm(state.x_last), state.aoi, cfg.delta))

    return Decision(a=best[0], gamma=best[1], objective=best[2], a0_feasible=can_skip,
                    battery_ok=can_send, starved=starved, error=error)
