""" Closed-form surrogate ε(‖x‖, β) for the state prediction error after β predicted steps.

    Features by degree (no intercept, order fixed):

      1: ‖x‖, β
      2: ‖x‖, β, ‖x‖², β², ‖x‖β
      3: ‖x‖, β, ‖x‖², β², ‖x‖β, ‖x‖³, β³, ‖x‖²β, ‖x‖β²
"""

import logging
from dataclasses import dataclass

import numpy as np

from koopnet.control import plan_horizon
from koopnet.dynamics import NoiseModel, plant_step
from koopnet.errors import PlantDivergedError, RankDeficiencyError
from koopnet.koopman import embed_state, predict_missing_state
from koopnet.utils import rng_stream


logger = logging.getLogger("koopnet")

# (power of ‖x‖, power of β) per feature column
FEATURE_EXPONENTS = {
    1: [(1, 0), (0, 1)],
    2: [(1, 0), (0, 1), (2, 0), (0, 2), (1, 1)],
    3: [(1, 0), (0, 1), (2, 0), (0, 2), (1, 1), (3, 0), (0, 3), (2, 1), (1, 2)],
}

CONDITION_LIMIT = 1e12
RIDGE = 1e-8


def feature_names(degree):
    def name(pn, pb):
        parts = []
        if pn:
            parts.append("n" if pn == 1 else "n{}".format(pn))
        if pb:
            parts.append("beta" if pb == 1 else "beta{}".format(pb))
        return "*".join(parts)
    return [name(pn, pb) for pn, pb in FEATURE_EXPONENTS[degree]]


def features(norm, beta, degree):
    if degree not in FEATURE_EXPONENTS:
        raise ValueError("Unsupported surrogate degree {}".format(degree))
    norm = np.atleast_1d(np.asarray(norm, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    return np.stack([norm ** pn * beta ** pb for pn, pb in FEATURE_EXPONENTS[degree]], axis=-1)


@dataclass(frozen=True)
class ErrorSample:
    norm: float
    beta: int
    error: float


@dataclass(frozen=True)
class ErrorPolyCoeffs:
    alpha: np.ndarray
    degree: int

    def __post_init__(self):
        if len(self.alpha) != len(FEATURE_EXPONENTS[self.degree]):
            raise ValueError("Degree {} needs {} coefficients, got {}".format(
                self.degree, len(FEATURE_EXPONENTS[self.degree]), len(self.alpha)))

    @property
    def names(self):
        return feature_names(self.degree)


def sample_arrays(samples):
    norms = np.array([s.norm for s in samples], dtype=float)
    betas = np.array([s.beta for s in samples], dtype=float)
    errors = np.array([s.error for s in samples], dtype=float)
    return norms, betas, errors


def collect_samples(model, plant, solution, n, beta_max, seed=0, box=None, noise_config=None, x0=None):
    """ Measures ‖x̂ - x‖ after β steps of the controller's planned actions, from random states
        and random β in [1, beta_max]. With plant=None the "true" trajectory is the model's own
        latent rollout, so every error is 0.

        Returns (samples, discarded) where discarded counts diverged plant runs.
    """
    if n < 1 or beta_max < 1:
        raise ValueError("n and beta_max must be >= 1")
    state_dim = model.state_dim
    x0 = np.zeros(state_dim) if x0 is None else np.asarray(x0, dtype=float)
    z0 = embed_state(model, x0)
    if box is None:
        box = plant.box("episode") if plant is not None else (-np.ones(state_dim), np.ones(state_dim))
    low, high = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)

    samples = []
    discarded = 0
    for i in range(n):
        rng = rng_stream(seed, i, 0)
        x = rng.uniform(low, high)
        beta = int(rng.integers(1, beta_max + 1))
        actions = plan_horizon(model, solution, embed_state(model, x), z0, beta)
        predicted = predict_missing_state(model, x, actions, beta)

        if plant is None:
            actual = predict_missing_state(model, x, actions, beta)
        else:
            noise = None
            if noise_config is not None:
                noise = NoiseModel.from_section(noise_config, state_dim, rng_stream(seed, i, 1))
            actual = x
            try:
                for u in actions:
                    actual = plant_step(plant, actual, u, noise)
            except PlantDivergedError:
                discarded += 1
                continue

        samples.append(ErrorSample(norm=float(np.linalg.norm(x)), beta=beta,
                                   error=float(np.linalg.norm(predicted - actual))))

    if discarded:
        logger.warning("Discarded %d of %d error samples after plant divergence", discarded, n)
    return samples, discarded


def _fit(norms, betas, errors, degree):
    A = features(norms, betas, degree)
    if A.shape[0] <= A.shape[1]:
        raise RankDeficiencyError("Degree {} needs more than {} samples, got {}".format(degree, A.shape[1], A.shape[0]))

    # Normal equations on unit-norm columns, mapped back afterwards
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale == 0):
        raise RankDeficiencyError("A feature column is identically zero")
    A_scaled = A / scale
    gram = A_scaled.T @ A_scaled
    rhs = A_scaled.T @ errors
    if np.linalg.cond(gram) > CONDITION_LIMIT:
        logger.debug("Gram matrix near singular, adding ridge %g", RIDGE)
        gram = gram + RIDGE * np.eye(gram.shape[0])
    try:
        solution = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError("Least squares failed for degree {}: {}".format(degree, exc))
    if not np.all(np.isfinite(solution)):
        raise RankDeficiencyError("Least squares produced non-finite coefficients for degree {}".format(degree))
    return ErrorPolyCoeffs(alpha=solution / scale, degree=degree)


def fit_polynomial(samples, degree=2):
    norms, betas, errors = sample_arrays(samples)
    return _fit(norms, betas, errors, degree)


def eval_error(coeffs, norm, beta):
    """ αᵀφ(‖x‖, β) clamped at 0; returns a float for scalar inputs. """
    value = features(norm, beta, coeffs.degree) @ coeffs.alpha
    value = np.maximum(value, 0.0)
    if np.ndim(norm) == 0 and np.ndim(beta) == 0:
        return float(value[0])
    return value


def holdout_residuals(samples, degrees=(1, 2, 3), holdout=0.2, seed=0):
    """ Mean absolute held-out residual per degree, fitting on a seeded train split. """
    norms, betas, errors = sample_arrays(samples)
    order = rng_stream(seed, 0).permutation(len(errors))
    cut = len(errors) - max(1, int(round(holdout * len(errors))))
    train, test = order[:cut], order[cut:]

    residuals = {}
    for degree in sorted(degrees):
        coeffs = _fit(norms[train], betas[train], errors[train], degree)
        predicted = features(norms[test], betas[test], degree) @ coeffs.alpha
        residuals[degree] = float(np.mean(np.abs(errors[test] - predicted)))
    return residuals


def select_degree(samples, degrees=(1, 2, 3), holdout=0.2, seed=0):
    """ Degree with the smallest held-out residual, near-ties go to the lower degree. """
    if len(set(degrees)) < 2:
        raise ValueError("Need at least two candidate degrees")
    residuals = holdout_residuals(samples, degrees, holdout, seed)
    best = None
    for degree in sorted(residuals):
        if best is None:
            best = degree
        elif residuals[degree] < residuals[best] and not np.isclose(
            residuals[degree], residuals[best], rtol=1e-6, atol=1e-9
        ):
            best = degree
    logger.info("Held-out residuals %s, selected degree %d", residuals, best)
    return best
