"""L1-penalized empirical risk minimization with an unpenalized intercept.

The Lasso is solved by proximal Newton: each outer step builds a weighted
quadratic model of the empirical risk (exact curvature for logistic and
quadratic loss, the unit curvature bound for Huber) and minimizes model plus
penalty by cyclic coordinate descent, followed by a backtracking line search
on the true objective. Optimality is certified by :func:`verify_kkt`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit
from scipy.optimize import brentq, linprog

from .data import DataError, Dataset, predictor_set
from .loss import LossSpec, _curvature, _derivative, _value

logger = logging.getLogger(__name__)


class DegenerateResponseError(DataError):
    """The intercept-only minimizer does not exist (single-class response)."""


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 10_000
    tolerance: float = 1e-7
    kkt_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        for name in ("tolerance", "kkt_tol"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


DEFAULT_CONFIG = SolverConfig()


@dataclass(frozen=True)
class PenalizedFit:
    """A (possibly unpenalized) fit of intercept and coefficients.

    ``coefficients`` is indexed 0..p-1 for predictors 1..p. ``flag`` records
    why a fit did not converge (``"separation"``, ``"max_iterations"``,
    ``"line_search"``) and is ``None`` otherwise.
    """

    lam: float
    intercept: float
    coefficients: np.ndarray
    objective: float
    converged: bool
    iterations: int
    kkt_residual: float = float("nan")
    flag: Optional[str] = None

    @property
    def support(self) -> tuple:
        return tuple(int(j) + 1 for j in np.flatnonzero(self.coefficients))

    @property
    def risk(self) -> float:
        return self.objective - self.lam * float(np.abs(self.coefficients).sum())


@dataclass(frozen=True)
class PathResult:
    fits: list
    loss: LossSpec
    lambda_max: float = float("nan")

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([f.lam for f in self.fits])

    def __len__(self):
        return len(self.fits)


# ---------------------------------------------------------------------------
# coordinate descent kernel
# ---------------------------------------------------------------------------


@njit(cache=True)
def _cd_weighted_lasso(xf, z, h, lam, b0, beta, max_sweeps, tol):
    """Minimize (1/2n) sum h_i (z_i - b0 - x_i.beta)^2 + lam |beta|_1 in place.

    ``xf`` must be Fortran-ordered so columns are contiguous. Returns the new
    intercept and the number of sweeps used.
    """
    n, p = xf.shape
    r = z - b0
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            for i in range(n):
                r[i] -= bj * xf[i, j]
    hs = 0.0
    for i in range(n):
        hs += h[i]
    v = np.zeros(p)
    for j in range(p):
        acc = 0.0
        for i in range(n):
            acc += h[i] * xf[i, j] * xf[i, j]
        v[j] = acc / n

    sweeps = 0
    full = True
    while sweeps < max_sweeps:
        maxd = 0.0
        acc = 0.0
        for i in range(n):
            acc += h[i] * r[i]
        d0 = acc / hs
        if d0 != 0.0:
            b0 += d0
            for i in range(n):
                r[i] -= d0
            maxd = max(maxd, hs / n * d0 * d0)
        for j in range(p):
            old = beta[j]
            if (not full and old == 0.0) or v[j] <= 0.0:
                continue
            g = 0.0
            for i in range(n):
                g += h[i] * xf[i, j] * r[i]
            u = g / n + v[j] * old
            if u > lam:
                new = (u - lam) / v[j]
            elif u < -lam:
                new = (u + lam) / v[j]
            else:
                new = 0.0
            if new != old:
                diff = new - old
                for i in range(n):
                    r[i] -= diff * xf[i, j]
                beta[j] = new
                maxd = max(maxd, v[j] * diff * diff)
        sweeps += 1
        if maxd < tol:
            if full:
                break
            full = True
        else:
            full = False
    return b0, sweeps


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _require_standardized(d: Dataset):
    if not d.standardized:
        raise DataError("solver requires a standardized dataset")


def intercept_only(spec: LossSpec, y: np.ndarray) -> float:
    """Minimizer of the empirical risk over the intercept alone."""
    ybar = float(np.mean(y))
    if spec.kind == "logistic":
        if ybar <= 0.0 or ybar >= 1.0:
            raise DegenerateResponseError("degenerate response: all observations in one class")
        return float(np.log(ybar / (1.0 - ybar)))
    if spec.kind == "quadratic":
        return ybar
    delta = spec.delta

    def score(b):
        return float(np.mean(np.clip(y - b, -delta, delta)))

    lo, hi = float(y.min()) - 2 * delta, float(y.max()) + 2 * delta
    if score(lo) <= 0.0:
        return lo
    if score(hi) >= 0.0:
        return hi
    return float(brentq(score, lo, hi, xtol=1e-14))


def _kkt_residual(g0, g, beta, lam):
    res = abs(g0)
    active = beta != 0.0
    if active.any():
        res = max(res, float(np.max(np.abs(g[active] + lam * np.sign(beta[active])))))
    if (~active).any():
        res = max(res, float(np.max(np.abs(g[~active]))) - lam)
    return max(res, 0.0)


def _gradients(spec, x, y, eta):
    dr = _derivative(spec, eta, y)
    return float(np.mean(dr)), x.T @ dr / x.shape[0], dr


def _objective(spec, y, eta, beta, lam):
    return float(np.mean(_value(spec, eta, y))) + lam * float(np.abs(beta).sum())


def verify_kkt(d: Dataset, spec: LossSpec, fit: PenalizedFit) -> float:
    """Largest violation of the Lasso optimality conditions at ``fit``.

    A value below a small tolerance certifies global optimality since the
    problem is convex.
    """
    _require_standardized(d)
    beta = np.asarray(fit.coefficients, dtype=np.float64)
    if beta.shape != (d.p,):
        raise ValueError(f"expected {d.p} coefficients, got shape {beta.shape}")
    eta = fit.intercept + d.x @ beta
    g0, g, _ = _gradients(spec, d.x, d.y, eta)
    return _kkt_residual(g0, g, beta, fit.lam)


def lambda_max(d: Dataset, spec: LossSpec) -> float:
    """Smallest penalty at which the all-zero coefficient vector is optimal."""
    _require_standardized(d)
    b0 = intercept_only(spec, d.y)
    dr = _derivative(spec, np.full(d.n, b0), d.y)
    return float(np.max(np.abs(d.x.T @ dr)) / d.n)


def lambda_grid(lmax: float, m: int, ratio: float) -> np.ndarray:
    """``m`` log-equispaced penalties from ``lmax`` down to ``ratio * lmax``."""
    if m < 2:
        raise ValueError("lambda grid needs m >= 2")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    if not lmax > 0:
        raise ValueError("lmax must be positive")
    return lmax * np.logspace(0.0, np.log10(ratio), m)


# ---------------------------------------------------------------------------
# Lasso
# ---------------------------------------------------------------------------


class _Problem:
    """Arrays shared by repeated fits on one dataset."""

    def __init__(self, x, y, spec):
        self.x = np.ascontiguousarray(x)
        self.xf = np.asfortranarray(x)
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        self.spec = spec
        self.n, self.p = x.shape

    def weights(self, eta):
        if self.spec.kind == "logistic":
            return np.maximum(_curvature(self.spec, eta, self.y), 1e-6)
        return np.ones(self.n)

    def fit(self, lam, cfg, b0, beta):
        spec, x, y, n = self.spec, self.x, self.y, self.n
        beta = np.array(beta, dtype=np.float64)
        eta = b0 + x @ beta
        obj = _objective(spec, y, eta, beta, lam)
        inner_tol = (1e-2 * cfg.kkt_tol) ** 2
        converged, flag, it = False, "max_iterations", 0
        for it in range(1, cfg.max_iterations + 1):
            g0, g, dr = _gradients(spec, x, y, eta)
            kkt = _kkt_residual(g0, g, beta, lam)
            if kkt <= cfg.kkt_tol:
                converged, flag = True, None
                it -= 1
                break
            h = self.weights(eta)
            z = eta - dr / h
            new_beta = beta.copy()
            new_b0, _ = _cd_weighted_lasso(self.xf, z, h, lam, b0, new_beta, cfg.max_iterations, inner_tol)
            d0, dbeta = new_b0 - b0, new_beta - beta
            decrease = g0 * d0 + g @ dbeta + lam * (np.abs(new_beta).sum() - np.abs(beta).sum())
            t = 1.0
            while True:
                cb0, cbeta = b0 + t * d0, beta + t * dbeta
                ceta = cb0 + x @ cbeta
                cobj = _objective(spec, y, ceta, cbeta, lam)
                if cobj <= obj + 1e-4 * t * min(decrease, 0.0) + 1e-15 * abs(obj):
                    break
                t *= 0.5
                if t < 1e-10:
                    break
            if t < 1e-10:
                flag = "line_search"
                break
            step = t * max(abs(d0), float(np.max(np.abs(dbeta), initial=0.0)))
            b0, beta, eta, obj = cb0, cbeta, ceta, cobj
            if step <= cfg.tolerance * 1e-6 * max(1.0, float(np.max(np.abs(beta), initial=0.0))):
                # stalled at machine precision; report honestly via KKT below
                g0, g, _ = _gradients(spec, x, y, eta)
                kkt = _kkt_residual(g0, g, beta, lam)
                converged = kkt <= cfg.kkt_tol
                flag = None if converged else "stalled"
                break
        else:
            g0, g, _ = _gradients(spec, x, y, eta)
            kkt = _kkt_residual(g0, g, beta, lam)
            converged = kkt <= cfg.kkt_tol
            flag = None if converged else "max_iterations"
        beta[np.abs(beta) == 0.0] = 0.0  # normalize -0.0
        return PenalizedFit(
            lam=float(lam), intercept=float(b0), coefficients=beta, objective=obj,
            converged=converged, iterations=it, kkt_residual=kkt, flag=flag,
        )


def fit_lasso(
    d: Dataset,
    spec: LossSpec,
    lam: float,
    cfg: SolverConfig = DEFAULT_CONFIG,
    warm_start: Optional[PenalizedFit] = None,
) -> PenalizedFit:
    """Minimize (1/n) sum rho(b0 + b.x_i, y_i) + lam |b|_1 over (b0, b).

    Non-convergence is reported through ``converged=False`` rather than an
    exception.
    """
    _require_standardized(d)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    prob = _Problem(d.x, d.y, spec)
    if warm_start is not None:
        b0, beta = warm_start.intercept, warm_start.coefficients
    else:
        b0, beta = intercept_only(spec, d.y), np.zeros(d.p)
    return prob.fit(lam, cfg, b0, beta)


def _path_on(prob: _Problem, y, grid, cfg, n_cap):
    b0, beta = intercept_only(prob.spec, y), np.zeros(prob.p)
    fits = []
    for lam in grid:
        fit = prob.fit(lam, cfg, b0, beta)
        b0, beta = fit.intercept, fit.coefficients
        if not fit.converged:
            logger.warning("lasso fit at lambda=%.3g did not converge (%s)", lam, fit.flag)
        fits.append(fit)
    return [f for f in fits if n_cap is None or len(f.support) <= n_cap]


def path_grid(d: Dataset, spec: LossSpec, m: int, ratio: float) -> np.ndarray:
    lmax = lambda_max(d, spec)
    if m == 1:
        return np.array([ratio * lmax])
    return lambda_grid(lmax, m, ratio)


def fit_path(
    d: Dataset,
    spec: LossSpec,
    m: int = 20,
    ratio: float = 0.01,
    cfg: SolverConfig = DEFAULT_CONFIG,
) -> PathResult:
    """Warm-started Lasso fits over a decreasing penalty grid.

    Fits whose support exceeds n are dropped. ``m == 1`` fits the single
    penalty ``ratio * lambda_max``.
    """
    _require_standardized(d)
    grid = path_grid(d, spec, m, ratio)
    fits = _path_on(_Problem(d.x, d.y, spec), d.y, grid, cfg, d.n)
    lmax = grid[0] if m > 1 else grid[0] / ratio
    return PathResult(fits=fits, loss=spec, lambda_max=float(lmax))


# ---------------------------------------------------------------------------
# unpenalized refit
# ---------------------------------------------------------------------------


def _separable(a: np.ndarray, y: np.ndarray) -> bool:
    """Whether some nonzero direction weakly separates the two classes."""
    signs = (2.0 * y - 1.0)[:, None] * a
    k = a.shape[1]
    res = linprog(
        c=-signs.sum(axis=0),
        A_ub=-signs,
        b_ub=np.zeros(a.shape[0]),
        bounds=[(-1.0, 1.0)] * k,
        method="highs",
    )
    return bool(res.status == 0 and -res.fun > 1e-7 * a.shape[0])


def refit(
    d: Dataset,
    spec: LossSpec,
    w,
    cfg: SolverConfig = DEFAULT_CONFIG,
    warm_start: Optional[np.ndarray] = None,
) -> PenalizedFit:
    """Unpenalized empirical-risk minimizer over the intercept and columns ``w``.

    ``warm_start`` is an optional ``(|w| + 1,)`` vector (intercept first).
    Logistic fits on separable data return ``converged=False`` with
    ``flag="separation"``.
    """
    _require_standardized(d)
    w = predictor_set(w, d.p)
    k = len(w)
    if k + 1 > d.n:
        raise DataError(f"model of size {k} not identifiable with n={d.n}")
    n = d.n
    a = np.empty((n, k + 1))
    a[:, 0] = 1.0
    if k:
        a[:, 1:] = d.columns(w)
    y = d.y
    if spec.kind == "quadratic":
        theta = np.linalg.lstsq(a, y, rcond=None)[0]
        it = 1
    else:
        theta, it, flag = _newton(a, y, spec, cfg, warm_start)
        if flag is not None:
            coefs = np.zeros(d.p)
            if k:
                coefs[np.asarray(w) - 1] = theta[1:]
            eta = a @ theta
            return PenalizedFit(
                lam=0.0, intercept=float(theta[0]), coefficients=coefs,
                objective=float(np.mean(_value(spec, eta, y))), converged=False,
                iterations=it, kkt_residual=float(np.max(np.abs(a.T @ _derivative(spec, eta, y)) / n)),
                flag=flag,
            )
    eta = a @ theta
    grad = a.T @ _derivative(spec, eta, y) / n
    coefs = np.zeros(d.p)
    if k:
        coefs[np.asarray(w) - 1] = theta[1:]
    gnorm = float(np.max(np.abs(grad)))
    return PenalizedFit(
        lam=0.0, intercept=float(theta[0]), coefficients=coefs,
        objective=float(np.mean(_value(spec, eta, y))), converged=gnorm <= cfg.kkt_tol,
        iterations=it, kkt_residual=gnorm, flag=None if gnorm <= cfg.kkt_tol else "max_iterations",
    )


_SEPARATION_NORM = 1e4


def _newton(a, y, spec, cfg, warm_start):
    """Damped Newton with Levenberg-style curvature floor; returns (theta, iters, flag)."""
    n, k1 = a.shape
    if warm_start is not None:
        theta = np.array(warm_start, dtype=np.float64)
    else:
        theta = np.zeros(k1)
        theta[0] = intercept_only(spec, y)
    gram = a.T @ a / n
    mu = 1e-3 if spec.kind == "huber" else 0.0
    gtol = 1e-3 * cfg.kkt_tol
    eta = a @ theta
    f = float(np.mean(_value(spec, eta, y)))
    max_iter = min(cfg.max_iterations, 500)
    checked_separation = False
    for it in range(1, max_iter + 1):
        dr = _derivative(spec, eta, y)
        grad = a.T @ dr / n
        if np.max(np.abs(grad)) <= gtol:
            if spec.kind == "logistic" and k1 > 1 and np.all(eta * (2.0 * y - 1.0) > 0.0):
                # theta itself separates the classes: the infimum is not attained
                return theta, it - 1, "separation"
            return theta, it - 1, None
        h = _curvature(spec, eta, y)
        hess = (a * h[:, None]).T @ a / n + mu * gram
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hess + 1e-10 * np.eye(k1), grad, rcond=None)[0]
        decrease = float(grad @ step)
        if decrease >= 0:  # curvature model failed; fall back to the majorizer
            step = -np.linalg.solve(gram, grad)
            decrease = float(grad @ step)
        t = 1.0
        while True:
            cand = theta + t * step
            ceta = a @ cand
            cf = float(np.mean(_value(spec, ceta, y)))
            if cf <= f + 1e-4 * t * decrease:
                break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            if spec.kind == "huber" and mu < 1e6:
                mu = max(mu * 10.0, 1e-3)
                continue
            return theta, it, "line_search"
        if spec.kind == "huber":
            mu = mu * 10.0 if t < 1.0 else max(mu / 10.0, 1e-8)
        theta, eta, f = cand, ceta, cf
        if spec.kind == "logistic" and k1 > 1:
            big = np.linalg.norm(theta[1:]) > _SEPARATION_NORM
            if big or (it >= 25 and not checked_separation):
                checked_separation = True
                if big or _separable(a, y):
                    return theta, it, "separation"
    dr = _derivative(spec, eta, y)
    if np.max(np.abs(a.T @ dr / n)) <= cfg.kkt_tol:
        return theta, max_iter, None
    if spec.kind == "logistic" and _separable(a, y):
        return theta, max_iter, "separation"
    return theta, max_iter, "max_iterations"
