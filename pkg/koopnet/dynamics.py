""" Plant models: the spring-coupled double pendulum and the cartpole, their discrete-time
    stepping and the quadratic control cost.

    States and actions are plain float64 numpy vectors. Angles are never wrapped.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from django.core.exceptions import ImproperlyConfigured

from koopnet.errors import DimensionMismatch, PlantDivergedError


INPUT_NONLINEARITIES = ("tanh", "cubic")


def input_nonlinearity(u, kind):
    if kind == "tanh":
        return np.tanh(u)
    elif kind == "cubic":
        return u - u ** 3 / 3.0
    raise ValueError("Unknown input nonlinearity: {}".format(kind))


@dataclass(frozen=True)
class PendulumParams:
    m1: float = 2.0
    m2: float = 2.0
    j1: float = 0.5
    j2: float = 0.5
    g: float = 10.0
    spring_length: float = 0.5
    b: float = 0.4
    k: float = 2.0
    s: float = 0.5
    input_kind: str = "tanh"

    def __post_init__(self):
        for name in ("m1", "m2", "j1", "j2", "spring_length", "s"):
            if not getattr(self, name) > 0:
                raise ImproperlyConfigured("PendulumParams.{} must be strictly positive".format(name))
        if self.input_kind not in INPUT_NONLINEARITIES:
            raise ImproperlyConfigured("Unknown input nonlinearity: {}".format(self.input_kind))

    @classmethod
    def from_config(cls, config):
        plant = config["plant"]
        return cls(input_kind=plant["input_nonlinearity"], **plant["params"])


def double_pendulum_deriv(x, u, p):
    """ d/dt [θ1, θ̇1, θ2, θ̇2] for the spring-coupled double pendulum. """
    theta1, omega1, theta2, omega2 = x
    h1 = input_nonlinearity(u[0], p.input_kind)
    h2 = input_nonlinearity(u[1], p.input_kind)
    spring = p.k * p.s ** 2 / 4.0
    offset = p.k * p.s / 2.0 * (p.spring_length - p.b)

    domega1 = (
        (p.m1 * p.g * p.s / p.j1 - spring / p.j1) * math.sin(theta1)
        + offset / p.j1
        + h1 / p.j1
        + spring / p.j1 * math.sin(theta2)
    )
    domega2 = (
        (p.m2 * p.g * p.s / p.j2 + spring / p.j2) * math.sin(theta2)
        - offset / p.j2
        + h2 / p.j2
        + spring / p.j2 * math.sin(theta1)
    )
    return np.array([omega1, domega1, omega2, domega2])


def rk4_step(deriv, x, dt):
    k1 = deriv(x)
    k2 = deriv(x + 0.5 * dt * k1)
    k3 = deriv(x + 0.5 * dt * k2)
    k4 = deriv(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class CartPoleParams:
    gravity: float = 9.8
    masscart: float = 1.0
    masspole: float = 0.1
    length: float = 0.5  # half the pole length
    tau: float = 0.02

    @property
    def total_mass(self):
        return self.masscart + self.masspole

    @property
    def polemass_length(self):
        return self.masspole * self.length


def cartpole_step(x, u, p=CartPoleParams()):
    """ One Euler step of the classic cartpole with a continuous force u[0]. """
    position, velocity, theta, theta_dot = x
    force = float(np.asarray(u).reshape(-1)[0])
    costheta = math.cos(theta)
    sintheta = math.sin(theta)

    temp = (force + p.polemass_length * theta_dot ** 2 * sintheta) / p.total_mass
    thetaacc = (p.gravity * sintheta - costheta * temp) / (
        p.length * (4.0 / 3.0 - p.masspole * costheta ** 2 / p.total_mass)
    )
    xacc = temp - p.polemass_length * thetaacc * costheta / p.total_mass

    return np.array([
        position + p.tau * velocity,
        velocity + p.tau * xacc,
        theta + p.tau * theta_dot,
        theta_dot + p.tau * thetaacc,
    ])


@dataclass
class NoiseModel:
    """ Additive Gaussian process noise n_t ~ N(0, covariance). Owns its generator; give every
        episode its own instance.
    """
    covariance: np.ndarray
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
            raise ImproperlyConfigured("Noise covariance must be a symmetric square matrix")
        if np.linalg.eigvalsh(cov).min() < -1e-12:
            raise ImproperlyConfigured("Noise covariance must be positive semidefinite")
        self.covariance = cov
        self._silent = not np.any(cov)

    @classmethod
    def isotropic(cls, dim, scale, rng=None):
        return cls(scale * np.eye(dim), rng if rng is not None else np.random.default_rng())

    @classmethod
    def zero(cls, dim):
        return cls(np.zeros((dim, dim)))

    @classmethod
    def from_config(cls, config, dim, rng):
        return cls.from_section(config["noise"], dim, rng)

    @classmethod
    def from_section(cls, noise, dim, rng):
        if noise.get("covariance") is not None:
            return cls(np.asarray(noise["covariance"], dtype=float), rng)
        return cls.isotropic(dim, float(noise["scale"]), rng)

    def draw(self):
        dim = self.covariance.shape[0]
        if self._silent:
            return np.zeros(dim)
        return self.rng.multivariate_normal(np.zeros(dim), self.covariance, method="eigh")


class Plant(object):
    """ Base class for the simulated plants. Subclasses implement `advance`, the noise-free
        one-step map x_{t+1} = f(x_t, u_t).
    """
    kind = None
    state_dim = None
    action_dim = None
    default_u_max = None
    # Sampling box (low, high) used for training data
    default_data_box = None
    # Much tighter box for closed-loop episodes
    default_episode_box = None
    default_Q = None
    default_B = None

    def __init__(self, dt=0.02, u_max=None):
        if not dt > 0:
            raise ImproperlyConfigured("dt must be positive")
        self.dt = float(dt)
        self.u_max = float(u_max if u_max is not None else self.default_u_max)

    def clip(self, u):
        return np.clip(np.asarray(u, dtype=float).reshape(self.action_dim), -self.u_max, self.u_max)

    def advance(self, x, u):
        raise NotImplementedError()

    def box(self, which="data"):
        low, high = self.default_data_box if which == "data" else self.default_episode_box
        return np.asarray(low, dtype=float), np.asarray(high, dtype=float)

    def sample_state(self, rng, box=None):
        low, high = box if box is not None else self.box()
        return rng.uniform(low, high)


class DoublePendulum(Plant):
    kind = "double_pendulum"
    state_dim = 4
    action_dim = 2
    default_u_max = 5.0
    default_data_box = ([-math.pi, -2.0, -math.pi, -2.0], [math.pi, 2.0, math.pi, 2.0])
    default_episode_box = ([-0.05, -0.05, -0.05, -0.05], [0.05, 0.05, 0.05, 0.05])
    default_Q = (20.0, 0.01, 5.0, 0.01)
    default_B = (0.001, 0.001)

    def __init__(self, params=PendulumParams(), dt=0.02, u_max=None):
        super(DoublePendulum, self).__init__(dt=dt, u_max=u_max)
        self.params = params

    def advance(self, x, u):
        return rk4_step(lambda state: double_pendulum_deriv(state, u, self.params), x, self.dt)


class CartPole(Plant):
    kind = "cartpole"
    state_dim = 4
    action_dim = 1
    default_u_max = 10.0
    default_data_box = ([-2.4, -2.0, -0.5, -2.0], [2.4, 2.0, 0.5, 2.0])
    default_episode_box = ([-0.05, -0.05, -0.05, -0.05], [0.05, 0.05, 0.05, 0.05])
    default_Q = (20.0, 0.01, 5.0, 0.01)
    default_B = (0.001,)

    def __init__(self, params=CartPoleParams(), u_max=None):
        super(CartPole, self).__init__(dt=params.tau, u_max=u_max)
        self.params = params

    def advance(self, x, u):
        return cartpole_step(x, u, self.params)


def build_plant(config):
    plant = config["plant"]
    if plant["kind"] == "cartpole":
        params = CartPoleParams(tau=float(plant["dt"]), **plant["cartpole"])
        return CartPole(params, u_max=plant["u_max"])
    return DoublePendulum(PendulumParams.from_config(config), dt=plant["dt"], u_max=plant["u_max"])


def plant_step(plant, x, u, noise=None):
    """ x_{t+1} = f(x_t, clip(u_t)) + n_t. Raises PlantDivergedError on a non-finite state. """
    x = np.asarray(x, dtype=float)
    if x.shape != (plant.state_dim,):
        raise DimensionMismatch("Expected state of length {}, got {}".format(plant.state_dim, x.shape))
    x_next = plant.advance(x, plant.clip(u))
    if noise is not None:
        x_next = x_next + noise.draw()
    if not np.all(np.isfinite(x_next)):
        raise PlantDivergedError("Plant state became non-finite", last_state=x)
    return x_next


def control_cost(x_tilde, u_tilde, Q, B, x0):
    """ J = (x̃ - x0)ᵀ Q (x̃ - x0) + ũᵀ B ũ """
    x_tilde = np.asarray(x_tilde, dtype=float)
    u_tilde = np.asarray(u_tilde, dtype=float).reshape(-1)
    Q = np.atleast_2d(Q)
    B = np.atleast_2d(B)
    dx = x_tilde - np.asarray(x0, dtype=float)
    if Q.shape != (dx.size, dx.size) or B.shape != (u_tilde.size, u_tilde.size):
        raise DimensionMismatch(
            "Weights {} / {} do not match state {} / action {}".format(Q.shape, B.shape, dx.size, u_tilde.size)
        )
    return float(dx @ Q @ dx + u_tilde @ B @ u_tilde)


def cost_weights(config, plant):
    """ (Q, B, x0) from the control section, falling back to the plant defaults. """
    control = config["control"]
    Q = control["Q"] if control["Q"] is not None else plant.default_Q
    B = control["B"] if control["B"] is not None else plant.default_B
    x0 = control["x0"] if control["x0"] is not None else [0.0] * plant.state_dim
    Q = np.asarray(Q, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.diag(Q) if Q.ndim == 1 else Q
    B = np.diag(B) if B.ndim == 1 else B
    return Q, B, np.asarray(x0, dtype=float)
