"""Losses rho(s, y) of a linear predictor s against a binary response y.

All functions are vectorized over ``s`` and ``y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

KINDS = ("logistic", "quadratic", "huber")
DEFAULT_HUBER_DELTA = 0.1

# beyond this margin log(1 + e^m) is replaced by m; dropped term < 1e-13
_LOGISTIC_LINEAR_ABOVE = 30.0


@dataclass(frozen=True)
class LossSpec:
    """Loss selector.

    ``delta`` is the Huber transition point and must be ``None`` for the
    other kinds.
    """

    kind: str = "logistic"
    delta: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss {self.kind!r}; expected one of {KINDS}")
        if self.kind == "huber":
            if self.delta is None:
                object.__setattr__(self, "delta", DEFAULT_HUBER_DELTA)
            if not self.delta > 0:
                raise ValueError("huber delta must be positive")
            object.__setattr__(self, "delta", float(self.delta))
        elif self.delta is not None:
            raise ValueError(f"delta is only meaningful for huber loss, not {self.kind}")

    @property
    def lipschitz_constant(self) -> float:
        """Lipschitz constant of rho in s; ``math.inf`` for quadratic loss."""
        if self.kind == "logistic":
            return 1.0
        if self.kind == "huber":
            return self.delta
        return math.inf

    @property
    def is_lipschitz(self) -> bool:
        return math.isfinite(self.lipschitz_constant)

    def __str__(self):
        return f"huber({self.delta:g})" if self.kind == "huber" else self.kind


def parse_loss(text: str, huber_delta: float = DEFAULT_HUBER_DELTA) -> LossSpec:
    """Build a LossSpec from a CLI-style name."""
    text = text.strip().lower()
    if text == "huber":
        return LossSpec("huber", huber_delta)
    return LossSpec(text)


def _check(s, y):
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.isnan(s).any():
        raise ValueError("NaN linear predictor")
    if np.any((y != 0.0) & (y != 1.0)):
        raise ValueError("response must be 0 or 1")
    return s, y


def _value(spec: LossSpec, s, y):
    if spec.kind == "logistic":
        m = -s * (2.0 * y - 1.0)
        return np.where(m > _LOGISTIC_LINEAR_ABOVE, m,
                        np.log1p(np.exp(np.minimum(m, _LOGISTIC_LINEAR_ABOVE))))
    t = y - s
    if spec.kind == "quadratic":
        return 0.5 * t * t
    a = np.abs(t)
    d = spec.delta
    return np.where(a <= d, 0.5 * t * t, d * a - 0.5 * d * d)


def _derivative(spec: LossSpec, s, y):
    if spec.kind == "logistic":
        sign = 2.0 * y - 1.0
        return -sign * expit(-s * sign)
    t = y - s
    if spec.kind == "quadratic":
        return -t
    return -np.clip(t, -spec.delta, spec.delta)


def _curvature(spec: LossSpec, s, y):
    """Second derivative in s (Huber: indicator of the quadratic zone)."""
    if spec.kind == "logistic":
        q = expit(s)
        return q * (1.0 - q)
    if spec.kind == "quadratic":
        return np.ones_like(s)
    return (np.abs(y - s) <= spec.delta).astype(np.float64)


def curvature_bound(spec: LossSpec) -> float:
    """Global upper bound on the second derivative of rho in s."""
    return 0.25 if spec.kind == "logistic" else 1.0


def loss_value(spec: LossSpec, s, y):
    """rho(s, y); overflow-safe and nonnegative."""
    s, y = _check(s, y)
    out = _value(spec, s, y)
    return float(out) if out.ndim == 0 else out


def loss_derivative(spec: LossSpec, s, y):
    """d rho(s, y) / ds."""
    s, y = _check(s, y)
    out = _derivative(spec, s, y)
    return float(out) if out.ndim == 0 else out


def empirical_risk(spec: LossSpec, d, intercept: float, coefs) -> float:
    """Average loss (1/n) sum_i rho(intercept + coefs . x_i, y_i) over ``d``."""
    coefs = np.asarray(coefs, dtype=np.float64)
    if coefs.shape != (d.p,):
        raise ValueError(f"expected {d.p} coefficients, got shape {coefs.shape}")
    eta = intercept + d.x @ coefs
    return float(np.mean(_value(spec, eta, d.y)))
