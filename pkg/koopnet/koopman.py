""" Deep Koopman model: state and action embeddings, linear latent dynamics, the multi-step
    training loss with its gradients, dataset generation and recursive state prediction.

    Three model kinds share the same latent contract z_{k+1} = K_x z_k + K_u w_k:

      proposed  w = g_μ(u), u = g_ρ(w)
      dkuc      w = u (no action networks)
      dkac      w = A_aux(x) ⊙ u with an auxiliary state network A_aux
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from koopnet.dynamics import NoiseModel, plant_step
from koopnet.errors import (
    DimensionMismatch,
    HorizonError,
    NonFiniteLossError,
    PlantDivergedError,
)
from koopnet.nn import DenseNet, OptimizerState, adam_update, mlp_backward, mlp_forward
from koopnet.utils import rng_stream


logger = logging.getLogger("koopnet")

MODEL_KINDS = ("proposed", "dkuc", "dkac")

# |A_aux| below this is treated as zero when dividing a latent action back out
AUX_FLOOR = 1e-6


class KoopmanModel(object):
    def __init__(self, kind, phi, Kx, Ku, mu=None, rho=None, aux=None, u_max=None):
        if kind not in MODEL_KINDS:
            raise ValueError("Unknown model kind '{}'".format(kind))
        self.kind = kind
        self.phi = phi
        self.mu = mu
        self.rho = rho
        self.aux = aux
        self.Kx = np.asarray(Kx, dtype=float)
        self.Ku = np.asarray(Ku, dtype=float)
        self.u_max = u_max

        self.state_dim = phi.input_dim
        self.latent_dim = self.state_dim + phi.output_dim
        if kind == "proposed":
            if mu is None or rho is None:
                raise DimensionMismatch("The proposed model needs both action networks")
            self.action_dim = mu.input_dim
            self.action_latent_dim = mu.output_dim
            if rho.input_dim != mu.output_dim or rho.output_dim != mu.input_dim:
                raise DimensionMismatch("Action encoder and decoder dimensions disagree")
        else:
            self.action_dim = self.action_latent_dim = self.Ku.shape[1]
            if kind == "dkac" and (aux is None or aux.output_dim != self.action_dim):
                raise DimensionMismatch("DKAC needs an auxiliary network with one output per action")

        if self.Kx.shape != (self.latent_dim, self.latent_dim):
            raise DimensionMismatch("K_x must be {0}x{0}, got {1}".format(self.latent_dim, self.Kx.shape))
        if self.Ku.shape != (self.latent_dim, self.action_latent_dim):
            raise DimensionMismatch(
                "K_u must be {}x{}, got {}".format(self.latent_dim, self.action_latent_dim, self.Ku.shape)
            )

    @classmethod
    def initialise(cls, kind, state_dim, action_dim, embedding, hidden, action_hidden, rng, u_max=None):
        hidden = list(hidden or [])
        action_hidden = list(action_hidden or [])
        phi = DenseNet.he_uniform([state_dim] + hidden + [embedding], rng)
        latent = state_dim + embedding

        mu = rho = aux = None
        if kind == "proposed":
            mu = DenseNet.he_uniform([action_dim] + action_hidden + [action_dim], rng)
            rho = DenseNet.he_uniform([action_dim] + action_hidden[::-1] + [action_dim], rng)
        elif kind == "dkac":
            aux = DenseNet.he_uniform([state_dim] + hidden + [action_dim], rng)
            aux.weights[-1] *= 0.01
            aux.biases[-1][:] = 1.0

        Kx = np.eye(latent) + 0.01 * rng.standard_normal((latent, latent))
        Ku = 0.01 * rng.standard_normal((latent, action_dim))
        return cls(kind, phi, Kx, Ku, mu=mu, rho=rho, aux=aux, u_max=u_max)

    @classmethod
    def from_config(cls, config, plant, rng):
        model = config["model"]
        return cls.initialise(
            model["kind"],
            plant.state_dim,
            plant.action_dim,
            int(model["state_embedding"]),
            model["hidden"],
            model["action_hidden"],
            rng,
            u_max=plant.u_max,
        )

    @property
    def networks(self):
        """ (name, net) pairs in parameter order, skipping absent networks. """
        return [(name, net) for name, net in (
            ("phi", self.phi), ("mu", self.mu), ("rho", self.rho), ("aux", self.aux)
        ) if net is not None]

    def parameters(self):
        params = []
        for _, net in self.networks:
            params.extend(net.parameters())
        return params + [self.Kx, self.Ku]

    def touch(self):
        for _, net in self.networks:
            net.touch()


def embed_state(model, x):
    """ z = [x ; g_φ(x)], the state passes through unchanged. """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.state_dim:
        raise DimensionMismatch("Expected state of length {}, got {}".format(model.state_dim, x.shape))
    return np.concatenate([x, model.phi(x)], axis=-1)


def aux_gain(model, x):
    return model.aux(np.asarray(x, dtype=float))


def embed_action(model, u, x=None):
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != model.action_dim:
        raise DimensionMismatch("Expected action of length {}, got {}".format(model.action_dim, u.shape))
    if model.kind == "proposed":
        return model.mu(u)
    if model.kind == "dkac":
        if x is None:
            raise ValueError("DKAC action embedding needs the state")
        return aux_gain(model, x) * u
    return u.copy()


def divide_aux(model, w, x):
    """ u = w / A_aux(x) elementwise. Entries with |A_aux| < AUX_FLOOR saturate at ±u_max;
        returns (u, saturated).
    """
    gain = aux_gain(model, x)
    small = np.abs(gain) < AUX_FLOOR
    u_max = model.u_max if model.u_max is not None else np.finfo(float).max
    direction = np.sign(w) * np.where(gain < 0, -1.0, 1.0)
    u = np.where(small, direction * u_max, w / np.where(small, 1.0, gain))
    return u, bool(small.any())


def decode_action(model, w, x=None):
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != model.action_latent_dim:
        raise DimensionMismatch("Expected latent action of length {}, got {}".format(model.action_latent_dim, w.shape))
    if model.kind == "proposed":
        return model.rho(w)
    if model.kind == "dkac":
        if x is None:
            raise ValueError("DKAC action decoding needs the state")
        return divide_aux(model, w, x)[0]
    return w.copy()


def latent_step(model, z, w):
    return np.asarray(z, dtype=float) @ model.Kx.T + np.asarray(w, dtype=float) @ model.Ku.T


def predict_missing_state(model, x_last, actions, steps):
    """ Rolls the latent state forward from the last received x over the applied actions and
        returns the first D components.
    """
    if steps == 0:
        return np.array(x_last, dtype=float)
    if steps < 0 or len(actions) != steps:
        raise HorizonError("Need exactly {} applied actions, got {}".format(steps, len(actions)))

    z = embed_state(model, x_last)
    for u in actions:
        z = latent_step(model, z, embed_action(model, u, x=z[:model.state_dim]))
    return z[:model.state_dim]


def multistep_loss(model, X, U, horizon, with_grad=False):
    """ Multi-step latent prediction loss over a batch of windows.

        X is (B, N_p+1, D) and U is (B, N_p+1, D'). The rollout starts at z_0 = embed(x_0) and is
        driven by the actions at steps 0..N_p-1; the targets are embed(x_k) for k = 1..N_p, and
        the proposed model also pays the action reconstruction error at steps 1..N_p.
        Gradients (when requested) follow `model.parameters()` order and flow into the targets.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    if X.ndim != 3 or U.ndim != 3 or X.shape[:2] != U.shape[:2]:
        raise DimensionMismatch("Windows must be (batch, steps, dim), got {} and {}".format(X.shape, U.shape))
    if X.shape[1] < horizon + 1:
        raise HorizonError("Horizon {} needs {} steps per window, got {}".format(horizon, horizon + 1, X.shape[1]))

    B, D, Da = X.shape[0], model.state_dim, model.action_dim
    X = X[:, :horizon + 1]
    U = U[:, :horizon + 1]
    q = model.latent_dim

    phi_out, phi_cache = mlp_forward(model.phi, X.reshape(-1, D))
    Z = np.concatenate([X, phi_out.reshape(B, horizon + 1, -1)], axis=2)

    if model.kind == "proposed":
        W_all, mu_cache = mlp_forward(model.mu, U.reshape(-1, Da))
        W_all = W_all.reshape(B, horizon + 1, -1)
        U_hat, rho_cache = mlp_forward(model.rho, W_all[:, 1:].reshape(-1, W_all.shape[2]))
        U_hat = U_hat.reshape(B, horizon, Da)
        W = W_all[:, :horizon]
    elif model.kind == "dkac":
        A, aux_cache = mlp_forward(model.aux, X[:, :horizon].reshape(-1, D))
        A = A.reshape(B, horizon, Da)
        W = A * U[:, :horizon]
    else:
        W = U[:, :horizon]

    Z_hat = [Z[:, 0]]
    for k in range(horizon):
        Z_hat.append(Z_hat[k] @ model.Kx.T + W[:, k] @ model.Ku.T)

    loss = 0.0
    for k in range(1, horizon + 1):
        loss += np.mean((Z[:, k] - Z_hat[k]) ** 2)
    if model.kind == "proposed":
        loss += np.sum(np.mean((U[:, 1:] - U_hat) ** 2, axis=(0, 2)))
    loss = float(loss)

    if not with_grad:
        return loss

    scale = 2.0 / (B * q)
    dZ = np.zeros_like(Z)
    G = np.zeros((B, q))
    dKx = np.zeros_like(model.Kx)
    dKu = np.zeros_like(model.Ku)
    dW = np.zeros_like(W)
    for k in range(horizon, 0, -1):
        residual = Z[:, k] - Z_hat[k]
        G = -scale * residual + G @ model.Kx
        dZ[:, k] += scale * residual
        dKx += G.T @ Z_hat[k - 1]
        dKu += G.T @ W[:, k - 1]
        dW[:, k - 1] = G @ model.Ku
    dZ[:, 0] += G @ model.Kx

    grads = []
    phi_grads, _ = mlp_backward(model.phi, phi_cache, dZ[:, :, D:].reshape(B * (horizon + 1), -1))
    grads.extend(phi_grads)

    if model.kind == "proposed":
        dU_hat = -2.0 / (B * Da) * (U[:, 1:] - U_hat)
        rho_grads, dW_rec = mlp_backward(model.rho, rho_cache, dU_hat.reshape(B * horizon, Da))
        dW_all = np.zeros_like(W_all)
        dW_all[:, :horizon] += dW
        dW_all[:, 1:] += dW_rec.reshape(B, horizon, -1)
        mu_grads, _ = mlp_backward(model.mu, mu_cache, dW_all.reshape(B * (horizon + 1), -1))
        grads.extend(mu_grads)
        grads.extend(rho_grads)
    elif model.kind == "dkac":
        dA = dW * U[:, :horizon]
        aux_grads, _ = mlp_backward(model.aux, aux_cache, dA.reshape(B * horizon, Da))
        grads.extend(aux_grads)

    grads.extend([dKx, dKu])
    return loss, grads


@dataclass
class TrajectoryDataset:
    states: list
    actions: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.states) != len(self.actions):
            raise DimensionMismatch("Need one action array per state array")
        for x, u in zip(self.states, self.actions):
            if x.shape[0] != u.shape[0]:
                raise DimensionMismatch("Trajectory has {} states but {} actions".format(x.shape[0], u.shape[0]))

    def __len__(self):
        return len(self.states)

    @property
    def state_dim(self):
        return self.states[0].shape[1]

    @property
    def action_dim(self):
        return self.actions[0].shape[1]

    def window_starts(self, horizon):
        """ Start rows (into the concatenated arrays) of every window of horizon+1 steps that
            stays inside one trajectory.
        """
        starts = []
        offset = 0
        for x in self.states:
            n = x.shape[0]
            if n >= horizon + 1:
                starts.append(np.arange(offset, offset + n - horizon))
            offset += n
        if not starts:
            raise HorizonError("No trajectory has {} steps".format(horizon + 1))
        return np.concatenate(starts)

    def stacked(self):
        return np.concatenate(self.states), np.concatenate(self.actions)


def take_windows(X_all, U_all, starts, horizon):
    index = starts[:, None] + np.arange(horizon + 1)[None, :]
    return X_all[index], U_all[index]


def generate_dataset(plant, n_traj, n_steps, u_max=None, seed=0, noise_config=None, box=None):
    """ Random-action trajectories: x_0 uniform in `box`, u_t uniform in [-u_max, u_max]^{D'}.

        Trajectory i draws its initial state and actions from rng_stream(seed, i, 0) and its
        process noise from rng_stream(seed, i, 1). A trajectory that diverges is cut at its last
        finite state and listed in meta["truncated"].
    """
    if n_traj < 1 or n_steps < 1:
        raise ValueError("n_traj and n_steps must be >= 1")
    u_max = plant.u_max if u_max is None else float(u_max)
    box = plant.box("data") if box is None else (np.asarray(box[0], float), np.asarray(box[1], float))

    states, actions, truncated = [], [], []
    for i in range(n_traj):
        rng = rng_stream(seed, i, 0)
        noise = NoiseModel.from_section(noise_config, plant.state_dim, rng_stream(seed, i, 1)) \
            if noise_config is not None else None

        x = plant.sample_state(rng, box)
        xs = np.empty((n_steps, plant.state_dim))
        us = rng.uniform(-u_max, u_max, size=(n_steps, plant.action_dim))
        length = n_steps
        for t in range(n_steps):
            xs[t] = x
            if t == n_steps - 1:
                break
            try:
                x = plant_step(plant, x, us[t], noise)
            except PlantDivergedError:
                length = t + 1
                truncated.append(i)
                logger.warning("Trajectory %d diverged after %d steps, truncated", i, length)
                break
        states.append(xs[:length])
        actions.append(us[:length])

    meta = {
        "plant": plant.kind,
        "u_max": u_max,
        "dt": plant.dt,
        "seed": int(seed),
        "trajectories": int(n_traj),
        "steps": int(n_steps),
        "truncated": truncated,
    }
    return TrajectoryDataset(states, actions, meta)


@dataclass(frozen=True)
class TrainingConfig:
    horizon: int = 10
    batch_size: int = 1000
    lr: float = 1e-3
    epochs: int = 30
    seed: int = 0
    # Fixed subset of windows the per-epoch loss is reported on
    eval_windows: int = 2048

    def __post_init__(self):
        if self.horizon < 1:
            raise HorizonError("Prediction horizon must be >= 1")
        if self.batch_size < 1 or self.epochs < 0 or self.lr < 0:
            raise ValueError("batch_size >= 1, epochs >= 0 and lr >= 0 are required")

    @classmethod
    def from_config(cls, config):
        training = config["training"]
        return cls(
            horizon=int(training["horizon"]),
            batch_size=int(training["batch_size"]),
            lr=float(training["lr"]),
            epochs=int(training["epochs"]),
            seed=int(training["seed"]),
        )


def train_model(model, dataset, config):
    """ Minibatch Adam on the multi-step loss. Returns (model, history) where history[0] is the
        loss of the untrained model and history[e] the loss after epoch e, both measured on a
        fixed evaluation subset of windows.
    """
    X_all, U_all = dataset.stacked()
    starts = dataset.window_starts(config.horizon)
    rng = rng_stream(config.seed, 0)

    eval_starts = starts
    if len(starts) > config.eval_windows:
        eval_starts = np.sort(rng.choice(starts, size=config.eval_windows, replace=False))
    X_eval, U_eval = take_windows(X_all, U_all, eval_starts, config.horizon)

    def evaluate():
        return multistep_loss(model, X_eval, U_eval, config.horizon)

    params = model.parameters()
    state = OptimizerState.for_parameters(params, config.lr)
    history = [evaluate()]
    logger.info("Initial loss %.6g over %d windows", history[0], len(eval_starts))

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(starts)
        for batch_index, first in enumerate(range(0, len(order), config.batch_size)):
            batch = order[first:first + config.batch_size]
            X, U = take_windows(X_all, U_all, batch, config.horizon)
            loss, grads = multistep_loss(model, X, U, config.horizon, with_grad=True)
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    "Loss became {} at epoch {}, batch {} (lr={})".format(loss, epoch, batch_index, config.lr),
                    lr=config.lr, epoch=epoch, batch=batch_index,
                )
            adam_update(params, grads, state)
            model.touch()

        history.append(evaluate())
        logger.info("Epoch %d/%d loss %.6g lr %g", epoch, config.epochs, history[-1], config.lr)

    return model, history


def rollout_mse(model, X, U, steps):
    """ Mean squared state error of `steps`-step open-loop latent predictions over windows
        (X, U), next to the error of predicting that the state stays put. Returns
        (model_mse, constant_mse).
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    if X.shape[1] < steps + 1:
        raise HorizonError("Windows need {} steps, got {}".format(steps + 1, X.shape[1]))
    z = embed_state(model, X[:, 0])
    for k in range(steps):
        z = latent_step(model, z, embed_action(model, U[:, k], x=z[:, :model.state_dim]))
    target = X[:, steps]
    return (
        float(np.mean((z[:, :model.state_dim] - target) ** 2)),
        float(np.mean((X[:, 0] - target) ** 2)),
    )
