""" Small dense ReLU networks with hand-written reverse mode, plus Adam.

    Arrays are row-major batches: an input of shape (n, d_in) maps to (n, d_out) through
    Y = X Wᵀ + b on every layer, ReLU on all but the last. A 1-D input is treated as a batch of
    one and a 1-D output is returned.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from koopnet.errors import DimensionMismatch, StaleCacheError


class DenseNet(object):
    def __init__(self, weights, biases):
        if len(weights) != len(biases) or not weights:
            raise DimensionMismatch("A network needs one bias per weight matrix")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionMismatch("Layer {} has weight {} and bias {}".format(i, w.shape, b.shape))
            if i and w.shape[1] != weights[i - 1].shape[0]:
                raise DimensionMismatch(
                    "Layer {} expects {} inputs but layer {} outputs {}".format(
                        i, w.shape[1], i - 1, weights[i - 1].shape[0]
                    )
                )
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        # Bumped whenever parameters change so old caches are detected
        self.version = 0

    @classmethod
    def he_uniform(cls, sizes, rng):
        """ Weights U(-√(6/fan_in), √(6/fan_in)), zero biases. """
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @classmethod
    def identity(cls, dim):
        return cls([np.eye(dim)], [np.zeros(dim)])

    @property
    def sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def output_dim(self):
        return self.weights[-1].shape[0]

    def parameters(self):
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def touch(self):
        self.version += 1

    def __call__(self, x):
        return mlp_forward(self, x)[0]


@dataclass
class ForwardCache:
    net_id: int
    version: int
    squeeze: bool
    # inputs[l] is what layer l consumed, pre[l] its affine output
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)


def _as_batch(x, dim):
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    batch = x.reshape(1, -1) if squeeze else x
    if batch.ndim != 2 or batch.shape[1] != dim:
        raise DimensionMismatch("Expected input width {}, got shape {}".format(dim, x.shape))
    return batch, squeeze


def mlp_forward(net, x):
    batch, squeeze = _as_batch(x, net.input_dim)
    cache = ForwardCache(net_id=id(net), version=net.version, squeeze=squeeze)

    activation = batch
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        cache.inputs.append(activation)
        pre = activation @ w.T + b
        cache.pre.append(pre)
        activation = pre if i == last else np.maximum(pre, 0.0)

    return (activation[0] if squeeze else activation), cache


def mlp_backward(net, cache, grad_output):
    """ Returns (parameter gradients in `net.parameters()` order, input gradient). """
    if cache.net_id != id(net) or cache.version != net.version:
        raise StaleCacheError("Forward cache does not belong to the current parameters")

    grad = np.asarray(grad_output, dtype=float)
    if cache.squeeze:
        grad = grad.reshape(1, -1)
    if grad.shape != cache.pre[-1].shape:
        raise DimensionMismatch("Output gradient {} does not match output {}".format(grad.shape, cache.pre[-1].shape))

    grads = [None] * (2 * len(net.weights))
    for i in reversed(range(len(net.weights))):
        if i != len(net.weights) - 1:
            grad = grad * (cache.pre[i] > 0.0)
        grads[2 * i] = grad.T @ cache.inputs[i]
        grads[2 * i + 1] = grad.sum(axis=0)
        grad = grad @ net.weights[i]

    return grads, (grad[0] if cache.squeeze else grad)


@dataclass
class OptimizerState:
    lr: float
    first: list
    second: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_parameters(cls, params, lr, **kwargs):
        return cls(
            lr=lr,
            first=[np.zeros_like(p) for p in params],
            second=[np.zeros_like(p) for p in params],
            **kwargs
        )


def adam_update(params, grads, state):
    """ In-place bias-corrected Adam step over matching lists of arrays. """
    if len(params) != len(grads) or len(params) != len(state.first):
        raise DimensionMismatch("Parameter, gradient and moment lists differ in length")

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.first, state.second):
        if p.shape != g.shape:
            raise DimensionMismatch("Gradient {} does not match parameter {}".format(g.shape, p.shape))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params, state
