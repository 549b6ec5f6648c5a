"""Digamma by upward recurrence and the asymptotic expansion."""

import numpy as np

from .errors import DomainError

_SHIFT = 6.0

# Bernoulli-number coefficients B_2k / (2k) of the asymptotic series in 1/x**2
_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


def _digamma_large(x):
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in reversed(_ASYMPTOTIC):
        series = (series + c) * inv2
    return np.log(x) - 0.5 / x - series


def digamma(x):
    """psi(x) for x > 0, scalar or array, absolute error below 1e-12."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise DomainError("digamma is only defined here for x > 0")
    acc = np.zeros_like(arr)
    y = arr.copy()
    small = y < _SHIFT
    while np.any(small):
        acc[small] -= 1.0 / y[small]
        y[small] += 1.0
        small = y < _SHIFT
    out = acc + _digamma_large(y)
    if np.ndim(x) == 0:
        return float(out)
    return out
