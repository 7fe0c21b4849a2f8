""" Embedding-space LQR and the controllers built on it. """

import logging
from dataclasses import dataclass

import numpy as np

from koopnet.errors import DimensionMismatch, HorizonError, UnstabilizableModelError
from koopnet.koopman import (
    AUX_FLOOR,
    aux_gain,
    decode_action,
    divide_aux,
    embed_action,
    embed_state,
    latent_step,
)


logger = logging.getLogger("koopnet")


@dataclass(frozen=True)
class LiftedWeights:
    Q_hat: np.ndarray
    B_hat: np.ndarray

    def __post_init__(self):
        for name, matrix in (("Q_hat", self.Q_hat), ("B_hat", self.B_hat)):
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise DimensionMismatch("{} must be square, got {}".format(name, matrix.shape))
            if not np.allclose(matrix, matrix.T):
                raise ValueError("{} must be symmetric".format(name))
        if np.linalg.eigvalsh(self.Q_hat).min() < -1e-12:
            raise ValueError("Q_hat must be positive semidefinite")
        if np.linalg.eigvalsh(self.B_hat).min() <= 0:
            raise ValueError("B_hat must be positive definite")


def lift_weights(Q, B, dims):
    """ Q̂ = blockdiag(Q, 0), B̂ = B for dims = (D, q, D', q'). Requires q' = D'. """
    D, q, Da, qa = dims
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if Q.shape != (D, D) or B.shape != (Da, Da):
        raise DimensionMismatch("Q must be {0}x{0} and B {1}x{1}, got {2} and {3}".format(D, Da, Q.shape, B.shape))
    if qa != Da or q < D:
        raise DimensionMismatch("Lifting needs q >= D and q' = D', got q={} q'={}".format(q, qa))

    Q_hat = np.zeros((q, q))
    Q_hat[:D, :D] = Q
    return LiftedWeights(Q_hat=Q_hat, B_hat=B.copy())


def model_weights(model, Q, B):
    return lift_weights(Q, B, (model.state_dim, model.latent_dim, model.action_dim, model.action_latent_dim))


@dataclass(frozen=True)
class LqrSolution:
    P: np.ndarray
    gain: np.ndarray
    residual: float
    iterations: int
    spectral_radius: float
    Q_hat: np.ndarray = None
    B_hat: np.ndarray = None
    tol: float = 1e-10
    max_iter: int = 10000

    @property
    def stable(self):
        return self.spectral_radius < 1.0


def _riccati_map(P, Kx, Ku, Q_hat, B_hat):
    S = B_hat + Ku.T @ P @ Ku
    gain = np.linalg.solve(S, Ku.T @ P @ Kx)
    P_next = Q_hat + Kx.T @ P @ Kx - Kx.T @ P @ Ku @ gain
    return 0.5 * (P_next + P_next.T), gain


def spectral_radius(matrix):
    return float(np.max(np.abs(np.linalg.eigvals(matrix)))) if matrix.size else 0.0


def _iterate_riccati(Kx, Ku, Q_hat, B_hat, P, tol, max_iter):
    """ Returns (P, iterations). Raises UnstabilizableModelError when the budget runs out or P
        stops being finite.
    """
    floor = 64 * np.finfo(float).eps
    for iteration in range(1, max_iter + 1):
        try:
            P_next, _ = _riccati_map(P, Kx, Ku, Q_hat, B_hat)
        except np.linalg.LinAlgError:
            iteration = max_iter + 1
            break
        step = np.linalg.norm(P_next - P)
        P = P_next
        if not np.all(np.isfinite(P)):
            break
        if step <= max(tol, floor * np.linalg.norm(P)):
            break
    else:
        iteration = max_iter + 1

    if iteration > max_iter or not np.all(np.isfinite(P)):
        radius = spectral_radius(Kx)
        raise UnstabilizableModelError(
            "Riccati iteration did not converge in {} iterations (open-loop spectral radius {:.6g})".format(
                max_iter, radius
            ),
            spectral_radius=radius, iterations=max_iter,
        )
    return P, iteration


def solve_dare(Kx, Ku, Q_hat, B_hat, tol=1e-10, max_iter=10000, require_stable=True):
    """ Fixed-point Riccati iteration from P = Q̂ until the update norm drops to `tol` (or to
        rounding level for large P).
    """
    Kx = np.atleast_2d(np.asarray(Kx, dtype=float))
    Ku = np.atleast_2d(np.asarray(Ku, dtype=float))
    Q_hat = np.atleast_2d(np.asarray(Q_hat, dtype=float))
    B_hat = np.atleast_2d(np.asarray(B_hat, dtype=float))
    q, qa = Ku.shape
    if Kx.shape != (q, q) or Q_hat.shape != (q, q) or B_hat.shape != (qa, qa):
        raise DimensionMismatch(
            "Inconsistent shapes K_x {}, K_u {}, Q {}, B {}".format(Kx.shape, Ku.shape, Q_hat.shape, B_hat.shape)
        )

    P, iteration = _iterate_riccati(Kx, Ku, Q_hat, B_hat, Q_hat.copy(), tol, max_iter)
    P_check, gain = _riccati_map(P, Kx, Ku, Q_hat, B_hat)
    residual = float(np.linalg.norm(P - P_check))
    radius = spectral_radius(Kx - Ku @ gain)
    logger.info("DARE converged in %d iterations, residual %.3g, closed-loop spectral radius %.6g",
                iteration, residual, radius)

    if radius >= 1.0 and require_stable:
        raise UnstabilizableModelError(
            "Closed-loop spectral radius {:.6g} >= 1".format(radius), spectral_radius=radius, iterations=iteration
        )
    return LqrSolution(P=P, gain=gain, residual=residual, iterations=iteration, spectral_radius=radius,
                       Q_hat=Q_hat, B_hat=B_hat, tol=tol, max_iter=max_iter)


def solve_for_model(model, Q, B, config=None, require_stable=None):
    control = (config or {}).get("control", {})
    if require_stable is None:
        require_stable = bool(control.get("require_stable", True))
    weights = model_weights(model, Q, B)
    return solve_dare(
        model.Kx, model.Ku, weights.Q_hat, weights.B_hat,
        tol=float(control.get("tol", 1e-10)),
        max_iter=int(control.get("max_iter", 10000)),
        require_stable=require_stable,
    )


def _clip(model, u):
    if model.u_max is None:
        return u
    return np.clip(u, -model.u_max, model.u_max)


def latent_action(sol, z, z0):
    return -sol.gain @ (np.asarray(z, dtype=float) - np.asarray(z0, dtype=float))


def optimal_action(model, sol, z, z0):
    """ (w*, u*) with w* = -K_LQR (z - z0) and u* = g_ρ(w*) clipped to u_max. """
    w = latent_action(sol, z, z0)
    return w, _clip(model, decode_action(model, w))


def dkac_gain(model, sol, x):
    """ LQR gain for the effective input matrix K_u·diag(A_aux(x)), warm-started from sol.P.

        Entries with |A_aux| < AUX_FLOOR enter the solve at ±AUX_FLOOR. If the iteration does not
        settle, the gain of sol (A_aux = 1) is returned scaled back to the original action.
    """
    aux = aux_gain(model, x)
    effective = np.where(np.abs(aux) < AUX_FLOOR, np.where(aux < 0, -AUX_FLOOR, AUX_FLOOR), aux)
    Ku = model.Ku * effective
    try:
        P, _ = _iterate_riccati(model.Kx, Ku, sol.Q_hat, sol.B_hat, sol.P, sol.tol, sol.max_iter)
        return _riccati_map(P, model.Kx, Ku, sol.Q_hat, sol.B_hat)[1]
    except UnstabilizableModelError:
        logger.warning("Per-step DKAC Riccati iteration did not settle, using the nominal gain")
        return sol.gain / effective[:, None]


def _baseline(kind, model, sol, z, z0):
    if kind != model.kind:
        raise ValueError("Model kind {} does not match baseline {}".format(model.kind, kind))
    z = np.asarray(z, dtype=float)
    if kind == "dkuc":
        w = latent_action(sol, z, z0)
        return w, _clip(model, w), False
    if kind == "dkac":
        x = z[:model.state_dim]
        v = -dkac_gain(model, sol, x) @ (z - np.asarray(z0, dtype=float))
        w = aux_gain(model, x) * v
        u, saturated = divide_aux(model, w, x)
        return w, _clip(model, u), saturated
    raise ValueError("Unknown baseline '{}'".format(kind))


def baseline_action(kind, model, sol, z, z0):
    """ Original-space action for the baseline models, returns (u, saturated).

        DKUC applies the latent action directly. DKAC solves the LQR at x̃ (the state part of z)
        with input matrix K_u·diag(A_aux(x̃)) and divides the resulting latent action
        A_aux(x̃) ⊙ v elementwise by A_aux(x̃).
    """
    _, u, saturated = _baseline(kind, model, sol, z, z0)
    return u, saturated


def _action_for(model, sol, z, z0):
    if model.kind == "proposed":
        w, u = optimal_action(model, sol, z, z0)
        return w, u, False
    return _baseline(model.kind, model, sol, z, z0)


def _rollout(model, sol, z, z0, horizon):
    if horizon < 1:
        raise HorizonError("Planning horizon must be >= 1")
    plan = []
    saturated = False
    z = np.asarray(z, dtype=float)
    for _ in range(horizon):
        w, u, flag = _action_for(model, sol, z, z0)
        saturated = saturated or flag
        plan.append(u)
        z = latent_step(model, z, w)
    return plan, saturated


def plan_horizon(model, sol, z, z0, horizon):
    """ N_c decoded actions along the nominal latent closed loop starting at z. """
    return _rollout(model, sol, z, z0, horizon)[0]


class Controller(object):
    """ Remote controller state: a latent estimate that is re-encoded from every received
        state and otherwise advanced with the actions the actuator applied.
    """
    kind = None

    def __init__(self, model, solution, x0, horizon):
        if self.kind is not None and model.kind != self.kind:
            raise ValueError("{} needs a '{}' model, got '{}'".format(type(self).__name__, self.kind, model.kind))
        self.model = model
        self.solution = solution
        self.z0 = embed_state(model, np.asarray(x0, dtype=float))
        self.horizon = int(horizon)
        self.z = None
        self.saturated = False

    def receive(self, x):
        self.z = embed_state(self.model, np.asarray(x, dtype=float))

    def advance(self, u_applied):
        w = embed_action(self.model, u_applied, x=self.z[:self.model.state_dim])
        self.z = latent_step(self.model, self.z, w)

    def estimate(self):
        return self.z[:self.model.state_dim].copy()

    def plan(self):
        plan, self.saturated = _rollout(self.model, self.solution, self.z, self.z0, self.horizon)
        return plan


class ProposedController(Controller):
    kind = "proposed"


class DkucController(Controller):
    kind = "dkuc"


class DkacController(Controller):
    kind = "dkac"


CONTROLLERS = {
    "proposed": ProposedController,
    "dkuc": DkucController,
    "dkac": DkacController,
}


def build_controller(model, solution, x0, horizon):
    return CONTROLLERS[model.kind](model, solution, x0, horizon)
