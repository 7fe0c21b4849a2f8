""" Closed-loop episodes: sensor scheduling over the SC link, remote prediction and planning,
    plan delivery over the CA link and actuator replay of cached plans.
"""

import logging
from functools import partial
from dataclasses import dataclass, field
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from django.core.exceptions import ImproperlyConfigured

from koopnet.channel import ChannelParams, required_power, transmit
from koopnet.control import build_controller, solve_for_model
from koopnet.dynamics import NoiseModel, build_plant, control_cost, cost_weights, plant_step
from koopnet.errors import InvariantViolation, PlantDivergedError, StaleCacheError
from koopnet.scheduler import (
    Decision,
    SchedulerConfig,
    SchedulerState,
    aoi_update,
    battery_update,
    constraint_coefficients,
    decide,
    lyapunov,
    queue_update,
)
from koopnet.utils import rng_stream


logger = logging.getLogger("koopnet")

FALLBACKS = ("cache", "b1-zero", "b2-hold")

# Stream ids under rng_stream(seed, episode, id)
INIT_STREAM, NOISE_STREAM, SC_STREAM, CA_STREAM = range(4)


@dataclass
class EpisodeSetup:
    plant: object
    model: object
    solution: object
    coeffs: object
    scheduler: SchedulerConfig
    sc: ChannelParams
    ca: ChannelParams
    sc_power: float
    ca_power: float
    Q: np.ndarray
    B: np.ndarray
    x0: np.ndarray
    slots: int = 1000
    horizon: int = 10
    fallback: str = "cache"
    noise: dict = None
    state_box: tuple = None
    ca_failures: dict = None
    sc_blocked: bool = False
    force_schedule: bool = False

    def __post_init__(self):
        if self.fallback not in FALLBACKS:
            raise ImproperlyConfigured("Unknown actuator fallback '{}'".format(self.fallback))
        if self.slots < 1 or self.horizon < 1:
            raise ImproperlyConfigured("Episodes need at least one slot and a planning horizon >= 1")
        if self.state_box is None:
            self.state_box = self.plant.box("episode")

    @classmethod
    def from_config(cls, config, model, coeffs, solution=None):
        episode = config["episode"]
        if episode["controller"] != model.kind:
            raise ImproperlyConfigured(
                "episode.controller is '{}' but the model is '{}'".format(episode["controller"], model.kind)
            )
        plant = build_plant(config)
        Q, B, x0 = cost_weights(config, plant)
        if solution is None:
            solution = solve_for_model(model, Q, B, config)

        sc = ChannelParams.from_config(config, "sc")
        ca = ChannelParams.from_config(config, "ca")
        box = episode.get("state_box")
        return cls(
            plant=plant,
            model=model,
            solution=solution,
            coeffs=coeffs,
            scheduler=SchedulerConfig.from_config(config),
            sc=sc,
            ca=ca,
            sc_power=required_power(sc).power,
            ca_power=required_power(ca).power,
            Q=Q,
            B=B,
            x0=x0,
            slots=int(episode["slots"]),
            horizon=int(config["control"]["horizon"]),
            fallback=episode["fallback"],
            noise=config["noise"],
            state_box=(np.asarray(box[0], float), np.asarray(box[1], float)) if box else None,
            ca_failures=episode.get("ca_failures"),
            sc_blocked=bool(episode.get("sc_blocked")),
            force_schedule=bool(episode.get("force_schedule")),
        )


@dataclass
class StepRecord:
    t: int
    a: int
    gamma: float
    sc_delivered: bool
    ca_success: bool
    x: np.ndarray
    x_tilde: np.ndarray
    u: np.ndarray  # fresh plan head
    u_tilde: np.ndarray  # applied
    beta: int
    queue: float
    battery: float
    cost: float
    error: float
    a0_feasible: bool
    starved: bool
    overflow: bool
    cache_empty: bool
    saturated: bool
    lyapunov: float
    constraint: np.ndarray = field(default_factory=lambda: np.zeros(4))
    cache_start: int = -1  # slot t' of the cached plan, -1 before any arrived
    plan: np.ndarray = None

    @staticmethod
    def fieldnames(state_dim, action_dim):
        names = ["t", "a", "gamma", "sc_delivered", "ca_success"]
        names += ["x{}".format(i + 1) for i in range(state_dim)]
        names += ["x_tilde{}".format(i + 1) for i in range(state_dim)]
        names += ["u{}".format(i + 1) for i in range(action_dim)]
        names += ["u_tilde{}".format(i + 1) for i in range(action_dim)]
        names += ["beta", "queue", "battery", "cost", "error", "a0_feasible", "starved", "overflow",
                  "cache_empty", "saturated", "lyapunov", "cache_start", "c_cubic", "c1", "c2", "c3"]
        return names

    def as_row(self):
        row = {
            "t": self.t, "a": self.a, "gamma": self.gamma,
            "sc_delivered": self.sc_delivered, "ca_success": self.ca_success,
            "beta": self.beta, "queue": self.queue, "battery": self.battery, "cost": self.cost,
            "error": self.error, "a0_feasible": self.a0_feasible, "starved": self.starved,
            "overflow": self.overflow, "cache_empty": self.cache_empty, "saturated": self.saturated,
            "lyapunov": self.lyapunov, "cache_start": self.cache_start,
        }
        for prefix, values in (("x", self.x), ("x_tilde", self.x_tilde), ("u", self.u), ("u_tilde", self.u_tilde)):
            for i, v in enumerate(values):
                row["{}{}".format(prefix, i + 1)] = float(v)
        for name, v in zip(("c_cubic", "c1", "c2", "c3"), self.constraint):
            row[name] = float(v)
        return row


@dataclass
class EpisodeResult:
    episode: int
    seed: int
    records: list
    truncated: bool = False


def actuator_fallback(kind, cache, t, cache_start, held, action_dim):
    """ Action applied when no fresh plan arrived. Returns (u, overflow, cache_empty).

        cache    replays the cached plan at offset t - t', holding its last entry once the
                 offset runs past the plan
        b1-zero  applies nothing
        b2-hold  repeats the last action that arrived
    """
    zero = np.zeros(action_dim)
    if kind == "b1-zero":
        return zero, False, False
    if kind == "b2-hold":
        if held is None:
            return zero, False, True
        return np.array(held, copy=True), False, False
    if kind != "cache":
        raise ImproperlyConfigured("Unknown actuator fallback '{}'".format(kind))

    if not cache:
        return zero, False, True
    offset = t - cache_start
    if offset < 0:
        raise StaleCacheError("Cache written at slot {} read at slot {}".format(cache_start, t))
    overflow = offset >= len(cache)
    if overflow:
        offset = len(cache) - 1
    return np.array(cache[offset], copy=True), overflow, False


def ca_failure_forced(bursts, t):
    """ Forced CA outage for a {start, length, every} burst description. """
    if not bursts:
        return False
    start = int(bursts.get("start", 0))
    length = int(bursts.get("length", 0))
    every = bursts.get("every")
    if t < start or length <= 0:
        return False
    if every:
        return (t - start) % int(every) < length
    return t < start + length


def _forced_decision(state, setup, p_sc):
    return Decision(a=1, gamma=1.0, objective=float("nan"), a0_feasible=False,
                    battery_ok=state.battery >= p_sc + setup.scheduler.sensing_power,
                    starved=False, error=float("nan"))


def run_episode(setup, seed, episode=0):
    plant, model, cfg = setup.plant, setup.model, setup.scheduler
    rng = rng_stream(seed, episode, INIT_STREAM)
    noise = NoiseModel.from_section(setup.noise, plant.state_dim, rng_stream(seed, episode, NOISE_STREAM)) \
        if setup.noise is not None else None
    sc_rng = rng_stream(seed, episode, SC_STREAM)
    ca_rng = rng_stream(seed, episode, CA_STREAM)

    x = plant.sample_state(rng, setup.state_box)
    controller = build_controller(model, setup.solution, setup.x0, setup.horizon)
    controller.receive(x)
    state = SchedulerState(battery=cfg.initial_battery, x_last=x.copy())

    cache, cache_start, held, applied = None, None, None, None
    records = []
    truncated = False
    for t in range(setup.slots):
        state.t = t
        constraint = constraint_coefficients(setup.coeffs, float(np.linalg.norm(state.x_last)), state.aoi, cfg.delta)
        if setup.force_schedule:
            decision = _forced_decision(state, setup, setup.sc_power)
        else:
            decision = decide(state, cfg, setup.coeffs, setup.sc_power)

        delivered = False
        if decision.a:
            delivered = transmit(setup.sc_power, setup.sc, sc_rng) and not setup.sc_blocked

        if t > 0:
            controller.advance(applied)
        if delivered:
            controller.receive(x)
            state.x_last = x.copy()
        x_tilde = controller.estimate()

        plan = controller.plan()
        ca_ok = transmit(setup.ca_power, setup.ca, ca_rng) and not ca_failure_forced(setup.ca_failures, t)
        overflow = cache_empty = False
        if ca_ok:
            cache, cache_start, held = plan, t, plan[0]
            u_tilde = np.array(plan[0], copy=True)
        else:
            u_tilde, overflow, cache_empty = actuator_fallback(
                setup.fallback, cache, t, cache_start, held, plant.action_dim
            )

        cost = control_cost(x_tilde, u_tilde, setup.Q, setup.B, setup.x0)

        state.queue = queue_update(state.queue, decision.a, decision.gamma)
        state.aoi = aoi_update(state.aoi, 1 if delivered else 0)
        state.battery = battery_update(state.battery, decision.a, setup.sc_power, cfg.sensing_power,
                                       t, cfg.recharge_period, cfg.initial_battery)

        records.append(StepRecord(
            t=t, a=decision.a, gamma=decision.gamma, sc_delivered=delivered, ca_success=ca_ok,
            x=x.copy(), x_tilde=x_tilde, u=np.array(plan[0], copy=True), u_tilde=u_tilde,
            beta=state.aoi, queue=state.queue, battery=state.battery, cost=cost, error=decision.error,
            a0_feasible=decision.a0_feasible, starved=decision.starved, overflow=overflow,
            cache_empty=cache_empty, saturated=controller.saturated, lyapunov=lyapunov(state),
            constraint=constraint, plan=np.array(plan),
            cache_start=-1 if cache_start is None else cache_start,
        ))
        if overflow:
            logger.warning("Episode %d slot %d: CA outages outlasted the cached plan", episode, t)

        try:
            x = plant_step(plant, x, u_tilde, noise)
        except PlantDivergedError:
            truncated = True
            logger.warning("Episode %d diverged at slot %d, truncated", episode, t)
            break
        applied = u_tilde

    check_records(records, cfg, fallback=setup.fallback)
    return EpisodeResult(episode=episode, seed=seed, records=records, truncated=truncated)


def _expected_fallback(fallback, record, source):
    """ (action, overflow) the actuator owes a slot without a fresh plan, given the slot the
        cached plan came from (None if no plan ever arrived).
    """
    if source is None:
        return np.zeros_like(record.u_tilde), False
    if fallback == "b1-zero":
        return np.zeros_like(record.u_tilde), False
    if fallback == "b2-hold":
        return source.plan[0], False
    offset = record.t - record.cache_start
    overflow = offset >= len(source.plan)
    return source.plan[min(offset, len(source.plan) - 1)], overflow


def check_records(records, cfg, fallback="cache", atol=1e-9):
    """ Raises InvariantViolation if a trace breaks the delivery, replay, error-constraint,
        battery or queue-stability rules.
    """
    by_slot = {r.t: r for r in records}
    for r in records:
        if r.a and r.sc_delivered and not np.array_equal(r.x_tilde, r.x):
            raise InvariantViolation("Delivered state differs from the estimate", step=r.t)
        if r.ca_success and not np.array_equal(r.u_tilde, r.u):
            raise InvariantViolation("Fresh plan arrived but a different action was applied", step=r.t)
        if not r.ca_success:
            if r.cache_start >= 0 and (r.cache_start not in by_slot or by_slot[r.cache_start].plan is None):
                raise InvariantViolation("Cached plan from slot {} is not in the trace".format(r.cache_start),
                                         step=r.t)
            source = by_slot[r.cache_start] if r.cache_start >= 0 else None
            expected, overflow = _expected_fallback(fallback, r, source)
            if not np.array_equal(r.u_tilde, expected):
                raise InvariantViolation(
                    "CA outage applied {} instead of {}".format(r.u_tilde, expected), step=r.t
                )
            if overflow != r.overflow:
                raise InvariantViolation("Cache overflow flag is {}".format(r.overflow), step=r.t)
        if r.a == 0 and not r.starved and r.error > cfg.delta:
            raise InvariantViolation("Skipped a slot with surrogate error {} > {}".format(r.error, cfg.delta),
                                     step=r.t)
        if r.battery < 0:
            raise InvariantViolation("Negative battery", step=r.t)

    if records:
        slots = len(records)
        sent = sum(r.a for r in records) / slots
        allowed = sum(r.gamma for r in records) / slots + records[-1].queue / slots
        if sent > allowed + atol:
            raise InvariantViolation("Transmission rate {} exceeds {}".format(sent, allowed), step=records[-1].t)


def run_episodes(setup, episodes, seed, workers=1):
    """ Runs episodes 0..episodes-1, in a process pool when workers > 1. Results come back in
        episode order whatever the completion order.
    """
    run = partial(run_episode, setup, seed)
    if workers and workers > 1 and episodes > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(run, range(episodes)))
    return [run(k) for k in range(episodes)]
