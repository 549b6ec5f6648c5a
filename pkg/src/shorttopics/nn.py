"""Dense layers with hand-written backward passes, and Adam.

Arrays are batch-major (``B x features``) float64. Each layer caches
what its backward pass needs during ``forward`` and accumulates parameter
gradients into ``grads`` during ``backward``.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateBatch, InvalidProbability, ShapeMismatch


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatch(msg)


# --- functional forms ---------------------------------------------------------

def linear_forward(weight, bias, x):
    _check(x.shape[-1] == weight.shape[1],
           f"input has {x.shape[-1]} features, layer expects {weight.shape[1]}")
    y = x @ weight.T
    if bias is not None:
        y = y + bias
    return y


def linear_backward(weight, bias, x, grad_out):
    """Returns ``(grad_x, grad_weight, grad_bias)``; grad_bias is None without a bias."""
    _check(grad_out.shape[-1] == weight.shape[0], "upstream gradient has the wrong width")
    grad_x = grad_out @ weight
    grad_w = grad_out.T @ x if grad_out.ndim == 2 else np.outer(grad_out, x)
    grad_b = None
    if bias is not None:
        grad_b = grad_out.sum(axis=0) if grad_out.ndim == 2 else grad_out.copy()
    return grad_x, grad_w, grad_b


def logistic(x):
    return np.exp(-np.logaddexp(0.0, -x))


def softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus_backward(x, grad_out):
    return grad_out * logistic(x)


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax_backward(y, grad_out, axis=-1):
    """Jacobian-vector product of softmax given its output ``y``."""
    return y * (grad_out - np.sum(grad_out * y, axis=axis, keepdims=True))


def dropout(x, p, training, rng):
    """Inverted dropout; returns ``(y, mask)`` where mask already carries 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise InvalidProbability(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


# --- layers -------------------------------------------------------------------

class Layer:
    training = True

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def train(self, mode: bool = True) -> "Layer":
        self.training = mode
        return self

    def eval(self) -> "Layer":
        return self.train(False)

    def zero_grad(self) -> None:
        for name, g in self.grads.items():
            g[...] = 0.0

    @property
    def grads(self) -> dict[str, np.ndarray]:
        return {}


class Linear(Layer):
    def __init__(self, n_in: int, n_out: int, bias: bool = True, rng=None):
        rng = np.random.default_rng(rng)
        bound = np.sqrt(6.0 / (n_in + n_out))
        self.weight = rng.uniform(-bound, bound, size=(n_out, n_in))
        self.bias = np.zeros(n_out) if bias else None
        self._grads = {"weight": np.zeros_like(self.weight)}
        if bias:
            self._grads["bias"] = np.zeros(n_out)
        self._x = None

    def parameters(self):
        out = {"weight": self.weight}
        if self.bias is not None:
            out["bias"] = self.bias
        return out

    @property
    def grads(self):
        return self._grads

    def forward(self, x):
        self._x = x
        return linear_forward(self.weight, self.bias, x)

    def backward(self, grad_out):
        gx, gw, gb = linear_backward(self.weight, self.bias, self._x, grad_out)
        self._grads["weight"] += gw
        if gb is not None:
            self._grads["bias"] += gb
        return gx


class Softplus(Layer):
    def forward(self, x):
        self._x = x
        return softplus(x)

    def backward(self, grad_out):
        return softplus_backward(self._x, grad_out)


class Dropout(Layer):
    def __init__(self, p: float, rng=None):
        if not 0.0 <= p < 1.0:
            raise InvalidProbability(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.rng = np.random.default_rng(rng)
        self._mask = None

    def forward(self, x):
        y, self._mask = dropout(x, self.p, self.training, self.rng)
        return y

    def backward(self, grad_out):
        return grad_out if self._mask is None else grad_out * self._mask


class BatchNorm(Layer):
    """Per-feature batch normalization with an optional affine map.

    ``learn_gain`` / ``learn_shift`` False freeze gain at 1 / shift at 0.
    """

    def __init__(self, n_features: int, momentum: float = 0.1, epsilon: float = 1e-5,
                 learn_gain: bool = True, learn_shift: bool = True):
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.gain = np.ones(n_features)
        self.shift = np.zeros(n_features)
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)
        self.momentum = momentum
        self.epsilon = epsilon
        self.learn_gain = learn_gain
        self.learn_shift = learn_shift
        self._grads = {}
        if learn_gain:
            self._grads["gain"] = np.zeros(n_features)
        if learn_shift:
            self._grads["shift"] = np.zeros(n_features)

    def parameters(self):
        out = {}
        if self.learn_gain:
            out["gain"] = self.gain
        if self.learn_shift:
            out["shift"] = self.shift
        return out

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    @property
    def grads(self):
        return self._grads

    def forward(self, x):
        if self.training:
            B = x.shape[0]
            if B < 2:
                raise DegenerateBatch("batch normalization needs at least 2 rows in training mode")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean *= 1.0 - self.momentum
            self.running_mean += self.momentum * mean
            self.running_var *= 1.0 - self.momentum
            self.running_var += self.momentum * var * B / (B - 1)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, self.training)
        return self.gain * xhat + self.shift

    def backward(self, grad_out):
        xhat, inv_std, training = self._cache
        if self.learn_gain:
            self._grads["gain"] += np.sum(grad_out * xhat, axis=0)
        if self.learn_shift:
            self._grads["shift"] += grad_out.sum(axis=0)
        g = grad_out * self.gain
        if not training:
            return g * inv_std
        B = g.shape[0]
        return (inv_std / B) * (B * g - g.sum(axis=0) - xhat * np.sum(g * xhat, axis=0))


# --- optimizer ----------------------------------------------------------------

class AdamState:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ShapeMismatch("parameter, gradient and moment lists differ in length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatch(f"parameter {p.shape} vs gradient {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params
