"""Simulation models M1 and M2 and their population-level targets.

Both models share the response P(Y = 1 | x) = expit((x1 + x2)^3) with AR(1)
Gaussian predictors. M1 adds the cubic monomials of (x1, x2) as predictors
and is well specified for logistic regression; M2 uses the raw Gaussian
columns only, so a logistic fit is misspecified but, by the linear
regressions property of the normal law, its pseudo-true slope vector is a
positive multiple of (1, 1, 0, ..., 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize
from scipy.special import expit

from .data import Dataset
from .loss import LossSpec, _curvature, _derivative, _value

MODELS = ("m1", "m2")


@dataclass(frozen=True)
class SimModelSpec:
    model: str = "m2"
    n: int = 500
    p: int = 150
    rho: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.n < 1:
            raise ValueError("n must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        if self.model == "m1" and self.p < 9:
            raise ValueError("model m1 needs p >= 9")
        if self.model == "m2" and self.p < 2:
            raise ValueError("model m2 needs p >= 2")

    def with_seed(self, seed: int) -> "SimModelSpec":
        return SimModelSpec(self.model, self.n, self.p, self.rho, int(seed))


@dataclass(frozen=True)
class GroundTruth:
    true_support: tuple
    true_direction: tuple
    wellspecified: bool

    def direction_vector(self, p: int) -> np.ndarray:
        """True direction zero-padded to length ``p``."""
        out = np.zeros(p)
        out[np.asarray(self.true_support) - 1] = self.true_direction
        return out


M1_TRUTH = GroundTruth((6, 7, 8, 9), (3.0, 3.0, 1.0, 1.0), True)
M2_TRUTH = GroundTruth((1, 2), (1.0, 1.0), False)


def ground_truth(model: str) -> GroundTruth:
    return {"m1": M1_TRUTH, "m2": M2_TRUTH}[model]


def sample_ar1_gaussian(n: int, p: int, rho: float, seed) -> np.ndarray:
    """Rows i.i.d. N(0, Sigma) with Sigma_ij = rho^|i - j|.

    Built column by column with Z_j = rho Z_{j-1} + sqrt(1 - rho^2) e_j, which
    reproduces the AR(1) covariance exactly.
    """
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie in (-1, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal((n, p))
    scale = np.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        z[:, j] = rho * z[:, j - 1] + scale * z[:, j]
    return z


def _bernoulli(rng, eta):
    return (rng.random(eta.shape[0]) < expit(eta)).astype(np.float64)


def generate_m1(spec: SimModelSpec):
    """Predictors x1, x2, their degree 2-3 monomials, then Gaussian noise columns."""
    if spec.p < 9:
        raise ValueError("model m1 needs p >= 9")
    rng = np.random.default_rng(spec.seed)
    z = sample_ar1_gaussian(spec.n, spec.p, spec.rho, rng)
    x = np.empty((spec.n, spec.p))
    x1, x2 = z[:, 0], z[:, 1]
    x[:, 0], x[:, 1] = x1, x2
    x[:, 2] = x1 ** 2
    x[:, 3] = x2 ** 2
    x[:, 4] = x1 * x2
    x[:, 5] = x1 ** 2 * x2
    x[:, 6] = x1 * x2 ** 2
    x[:, 7] = x1 ** 3
    x[:, 8] = x2 ** 3
    # column j (1-based, j >= 10) holds Z_{j-7}
    x[:, 9:] = z[:, 2:spec.p - 7]
    eta = 3 * x[:, 5] + 3 * x[:, 6] + x[:, 7] + x[:, 8]
    y = _bernoulli(rng, eta)
    return Dataset(x, y), M1_TRUTH


def generate_m2(spec: SimModelSpec):
    """Raw AR(1) Gaussian predictors with response expit((x1 + x2)^3)."""
    if spec.p < 2:
        raise ValueError("model m2 needs p >= 2")
    rng = np.random.default_rng(spec.seed)
    x = sample_ar1_gaussian(spec.n, spec.p, spec.rho, rng)
    y = _bernoulli(rng, (x[:, 0] + x[:, 1]) ** 3)
    return Dataset(x, y), M2_TRUTH


def generate(spec: SimModelSpec):
    return generate_m1(spec) if spec.model == "m1" else generate_m2(spec)


# ---------------------------------------------------------------------------
# population risk under M2 by bivariate quadrature
# ---------------------------------------------------------------------------

QUADRATURE_ORDER = 160
# composite Gauss-Legendre for the v direction: expit(v^3) has complex poles
# about half a standard deviation off the real axis, which stalls
# Gauss-Hermite convergence near 1e-7
_V_PANELS, _V_NODES, _V_HALF_WIDTH = 96, 16, 12.0


@lru_cache(maxsize=8)
def _gh(order: int):
    nodes, weights = hermegauss(order)
    return nodes, weights / weights.sum()


@lru_cache(maxsize=1)
def _normal_rule():
    """Nodes and weights integrating against the standard normal density."""
    g, gw = leggauss(_V_NODES)
    edges = np.linspace(-_V_HALF_WIDTH, _V_HALF_WIDTH, _V_PANELS + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    z = (mid[:, None] + half[:, None] * g[None, :]).ravel()
    w = (half[:, None] * gw[None, :]).ravel() * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
    return z, w / w.sum()


class M2Population:
    """Population risk of linear predictors under model M2.

    For any coefficient vector b, b.x depends on the data only through the
    pair (v, b.x) with v = x1 + x2, so every expectation reduces to a
    two-dimensional Gaussian integral regardless of p.
    """

    def __init__(self, rho: float, p: int, order: int = QUADRATURE_ORDER):
        if not -1.0 < rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        self.rho, self.p = float(rho), int(p)
        idx = np.arange(p)
        self.sigma = rho ** np.abs(idx[:, None] - idx[None, :])
        self.sv = np.sqrt(2.0 + 2.0 * rho)  # sd of v
        self.z, self.wz = _gh(order)  # for xi
        zv, self.wv = _normal_rule()
        self.v = self.sv * zv
        self.q = expit(self.v ** 3)  # P(Y = 1 | v) on the v nodes

    def _projection(self, b):
        """(c, s) with b.x = c v + s xi, xi standard normal independent of v."""
        b = np.asarray(b, dtype=np.float64)
        cov_bv = float(b @ (self.sigma[:, 0] + self.sigma[:, 1]))
        var_b = float(b @ self.sigma @ b)
        c = cov_bv / self.sv ** 2
        s2 = max(var_b - c * c * self.sv ** 2, 0.0)
        return c, np.sqrt(s2)

    def risk(self, spec: LossSpec, intercept: float, b) -> float:
        """E rho(intercept + b.x, Y)."""
        c, s = self._projection(b)
        if spec.kind == "quadratic":
            # the xi integral is exact: E (y - m - s xi)^2 = (y - m)^2 + s^2
            m = intercept + c * self.v
            vals = self.q * (1.0 - m) ** 2 + (1.0 - self.q) * m * m
            return float(0.5 * (self.wv @ vals + s * s))
        u = intercept + c * self.v[:, None] + s * self.z[None, :]
        r1 = _value(spec, u, np.ones_like(u))
        if spec.kind == "logistic":
            # log(1 + e^u) = log(1 + e^-u) + u
            vals = r1 + (1.0 - self.q[:, None]) * u
        else:
            r0 = _value(spec, u, np.zeros_like(u))
            vals = self.q[:, None] * r1 + (1.0 - self.q[:, None]) * r0
        return float(self.wv @ vals @ self.wz)

    def hessian(self, spec: LossSpec, intercept: float, b) -> np.ndarray:
        """Slope block of the Hessian E rho''(intercept + b.x, Y) x x^T.

        Requires b.x to be a function of v alone (b proportional to e1 + e2,
        as for the pseudo-true vector). Given v, x is Gaussian with mean a v
        and covariance Sigma - sv^2 a a^T, so one quadrature in v suffices.
        """
        c, s = self._projection(b)
        if s > 1e-10 * max(1.0, abs(c)):
            raise ValueError("hessian needs b.x to depend on x1 + x2 only")
        u = intercept + c * self.v
        h1 = _curvature(spec, u, np.ones_like(u))
        h0 = _curvature(spec, u, np.zeros_like(u))
        h = self.q * h1 + (1.0 - self.q) * h0
        e_h = float(self.wv @ h)
        e_hv2 = float(self.wv @ (h * self.v ** 2))
        a = (self.sigma[:, 0] + self.sigma[:, 1]) / self.sv ** 2
        aa = np.outer(a, a)
        return e_h * (self.sigma - self.sv ** 2 * aa) + e_hv2 * aa


def _two_predictor_grid(rho, order):
    """Nodes for (x1, x2) via v = x1 + x2 and t = x1 - x2 (independent)."""
    zt, wt = _gh(order)
    zv, wv = _normal_rule()
    v = np.sqrt(2.0 + 2.0 * rho) * zv
    t = np.sqrt(2.0 - 2.0 * rho) * zt
    x1 = 0.5 * (v[:, None] + t[None, :])
    x2 = 0.5 * (v[:, None] - t[None, :])
    q = np.broadcast_to(expit(v ** 3)[:, None], x1.shape)
    w = wv[:, None] * wt[None, :]
    return x1.ravel(), x2.ravel(), q.ravel(), w.ravel()


def population_target_m2(rho: float, loss: LossSpec, order: int = QUADRATURE_ORDER) -> np.ndarray:
    """Pseudo-true slopes (b1, b2) of the two-predictor fit under M2.

    Minimizes the quadrature approximation of E rho(b0 + b1 x1 + b2 x2, Y)
    over (b0, b1, b2); see :func:`population_fit_m2` for the intercept.
    """
    return population_fit_m2(rho, loss, order)[1:]


@lru_cache(maxsize=64)
def _population_fit_cached(rho, loss, order):
    x1, x2, q, w = _two_predictor_grid(rho, order)
    a = np.stack([np.ones_like(x1), x1, x2], axis=1)
    ones, zeros = np.ones_like(x1), np.zeros_like(x1)

    def fun(theta):
        u = a @ theta
        val = q * _value(loss, u, ones) + (1 - q) * _value(loss, u, zeros)
        der = q * _derivative(loss, u, ones) + (1 - q) * _derivative(loss, u, zeros)
        return float(w @ val), a.T @ (w * der)

    theta0 = np.array([0.5 if loss.kind != "logistic" else 0.0, 0.1, 0.1])
    res = minimize(fun, theta0, jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": 2000})
    theta = res.x
    # polish with Newton steps where the loss is twice differentiable
    if loss.kind != "huber":
        for _ in range(20):
            u = a @ theta
            if loss.kind == "logistic":
                h = expit(u) * (1 - expit(u))
            else:
                h = ones
            g = fun(theta)[1]
            hess = (a * (w * h)[:, None]).T @ a
            theta = theta - np.linalg.solve(hess, g)
    grad = fun(theta)[1]
    if np.max(np.abs(grad)) > 1e-8:
        raise RuntimeError(f"population risk minimization did not converge (|grad| = {np.max(np.abs(grad)):.2e})")
    return theta


def population_fit_m2(rho: float, loss: LossSpec, order: int = QUADRATURE_ORDER) -> np.ndarray:
    """Population minimizer (b0, b1, b2) of the two-predictor model under M2."""
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie in (-1, 1)")
    return _population_fit_cached(float(rho), loss, int(order)).copy()
