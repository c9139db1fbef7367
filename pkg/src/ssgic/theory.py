"""Monte Carlo checks of the probabilistic ingredients behind the selection theory.

Population quantities are evaluated under model M2, where every linear
predictor's risk is a two-dimensional Gaussian integral (see
:class:`ssgic.sim.M2Population`). The intercept is held at its pseudo-true
value; only slopes are perturbed.

Suprema are estimated from below by maximizing over a finite probe set, so
an empirical tail frequency can only understate the true one and a failed
bound check is a genuine violation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import standardize
from .loss import LossSpec, _value
from .sim import M2Population, SimModelSpec, generate, generate_m2, ground_truth, population_fit_m2
from .solver import DEFAULT_CONFIG, fit_lasso

VARIANTS = ("s", "s1", "s2")

# probes are materialized on the absolute radii 2^k (k >= _LADDER_MIN) not
# exceeding r, plus r itself, so probe sets nest across dyadic radii
_LADDER_MIN = -12


@dataclass(frozen=True)
class TheoryCheckConfig:
    mc_samples: int = 500
    sup_probes: int = 200
    r: float = 1.0
    t: float = 1.0
    k_n: int = 3
    epsilon_cone: float = 0.5
    s_n: float = 1.0

    def __post_init__(self):
        for name in ("mc_samples", "sup_probes", "k_n"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("t", "epsilon_cone", "s_n"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.r < 0:
            raise ValueError("r must be nonnegative")


@dataclass(frozen=True)
class CheckResult:
    name: str
    estimate: float
    bound: float
    se: float
    passed: bool

    def row(self) -> dict:
        return {"check": self.name, "estimate": self.estimate, "bound": self.bound,
                "se": self.se, "pass": self.passed}


def m2_pseudo_true(rho: float, p: int, spec: LossSpec):
    """(intercept, slopes) of the population risk minimizer under M2.

    Gaussian predictors satisfy the linear regressions condition, so the
    minimizer over all p slopes vanishes outside {1, 2}.
    """
    b0, b1, b2 = population_fit_m2(rho, spec)
    beta = np.zeros(p)
    beta[0], beta[1] = b1, b2
    return float(b0), beta


# ---------------------------------------------------------------------------
# probe sets
# ---------------------------------------------------------------------------


def _radii(r: float) -> list:
    if r == 0:
        return [0.0]
    top = math.floor(math.log2(r)) if r > 0 else _LADDER_MIN
    ladder = [2.0 ** k for k in range(_LADDER_MIN, top + 1) if 2.0 ** k <= r]
    if not ladder or ladder[-1] != r:
        ladder.append(float(r))
    return ladder


def _probe_offsets(variant, beta_star, support, r, k_n, count, seed):
    """Offsets Delta (rows) with beta_star + Delta feasible for ``variant``.

    Random ingredients are drawn per probe index from independent streams so
    that the first ``count`` probes are the same for any larger ``count``.
    """
    p = beta_star.shape[0]
    s_idx = np.asarray(support, dtype=np.intp) - 1
    others = np.setdiff1d(np.arange(p), s_idx)
    ss = np.random.SeedSequence(seed)
    streams = [np.random.default_rng(c) for c in ss.spawn(4)]
    gauss, unif, choice, expo = streams
    rows = []
    radii = _radii(r)
    if variant == "s":
        # signed vertices of the l1 ball first
        vertices = []
        for j in range(p):
            for sgn in (1.0, -1.0):
                e = np.zeros(p)
                e[j] = sgn
                vertices.append(e)
        shapes = vertices[:count]
        for i in range(count - len(shapes)):
            e = expo.exponential(size=p)
            sign = np.where(gauss.standard_normal(p) < 0, -1.0, 1.0)
            # alternate between the sphere and the interior of the ball
            u = 1.0 if i % 2 == 0 else unif.random() ** (1.0 / p)
            shapes.append(u * sign * e / e.sum())
        for rad in radii:
            rows.extend(rad * s for s in shapes)
    elif variant == "s1":
        if k_n < len(support):
            raise ValueError("k_n must be at least |s*| for the S1 supremum")
        kmax = min(k_n, p)
        shapes = []
        for i in range(count):
            extra = int(choice.integers(0, kmax - len(s_idx) + 1))
            w = np.concatenate([s_idx, choice.permutation(others)[:extra]]).astype(np.intp)
            g = gauss.standard_normal(len(w))
            g /= np.linalg.norm(g)
            u = 1.0 if i % 2 == 0 else unif.random() ** (1.0 / len(w))
            shape = np.zeros(p)
            shape[w] = u * g
            shapes.append(shape)
        for rad in radii:
            rows.extend(rad * s for s in shapes)
    elif variant == "s2":
        draws = []
        for i in range(count):
            keep = choice.random(len(s_idx)) < 0.5 if i % 3 else np.ones(len(s_idx), bool)
            g = gauss.standard_normal(len(s_idx))
            u = 1.0 if i % 2 == 0 else unif.random() ** (1.0 / max(int(keep.sum()), 1))
            draws.append((keep, g, u))
        for rad in radii:
            for keep, g, u in draws:
                delta = np.zeros(p)
                dropped = s_idx[~keep]
                delta[dropped] = -beta_star[dropped]
                budget = rad * rad - float(np.sum(beta_star[dropped] ** 2))
                kept = s_idx[keep]
                if budget < 0:
                    continue  # this sub-model is out of reach at this radius
                if kept.size:
                    gk = g[keep]
                    nrm = np.linalg.norm(gk)
                    if nrm > 0:
                        delta[kept] = math.sqrt(budget) * u * gk / nrm
                rows.append(delta)
    else:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if not rows:
        return np.zeros((1, p))
    return np.vstack([np.zeros(p)] + rows)


class SupremumProbe:
    """Probe points around the pseudo-true vector with their population W values."""

    def __init__(self, sim: SimModelSpec, spec: LossSpec, cfg: TheoryCheckConfig, variant: str,
                 beta_star=None, intercept=None, seed: int = 0):
        if sim.model != "m2":
            raise ValueError("population risk by quadrature is implemented for model m2 only")
        self.spec = spec
        if beta_star is None:
            intercept, beta_star = m2_pseudo_true(sim.rho, sim.p, spec)
        self.intercept = float(intercept or 0.0)
        self.beta_star = np.asarray(beta_star, dtype=np.float64)
        support = ground_truth("m2").true_support
        offsets = _probe_offsets(variant, self.beta_star, support, cfg.r, cfg.k_n, cfg.sup_probes, seed)
        self.points = self.beta_star + offsets
        pop = M2Population(sim.rho, sim.p)
        r_star = pop.risk(spec, self.intercept, self.beta_star)
        self.w = np.array([pop.risk(spec, self.intercept, b) - r_star for b in self.points])
        self.w[np.all(offsets == 0.0, axis=1)] = 0.0

    def deviation(self, x: np.ndarray, y: np.ndarray) -> float:
        """max over probes of |W(b) - W_n(b)| on the sample (x, y)."""
        eta = self.intercept + x @ self.points.T
        risk = _value(self.spec, eta, y[:, None]).mean(axis=0)
        r_star = float(np.mean(_value(self.spec, self.intercept + x @ self.beta_star, y)))
        wn = risk - r_star
        wn[np.all(self.points == self.beta_star, axis=1)] = 0.0
        return float(np.max(np.abs(self.w - wn)))


def estimate_sup_deviation(sim: SimModelSpec, beta_star, spec: LossSpec, cfg: TheoryCheckConfig,
                           variant: str = "s", intercept: Optional[float] = None, seed: int = 0) -> float:
    """Lower estimate of the supremum of |W - W_n| over the variant's feasible set.

    Draws one dataset from ``sim`` and maximizes over a probe set made of
    extreme points and random feasible points.
    """
    probe = SupremumProbe(sim, spec, cfg, variant, beta_star, intercept, seed)
    d, _ = generate(sim)
    return probe.deviation(d.x, d.y)


def lemma2_bound(variant: str, L: float, r: float, t: float, s_n: float, n: int, p: int,
                 k_n: int = 1, s_star_size: int = 1) -> float:
    """Closed-form tail bound for S(r), S1(r) or S2(r), capped at 1."""
    if not math.isfinite(L):
        raise ValueError("bound inapplicable: loss is not Lipschitz")
    if min(L, t, s_n) <= 0 or r < 0 or n < 1 or p < 1:
        raise ValueError("bound arguments must be positive")
    logp = math.log(max(p, 2))
    if variant == "s":
        val = 8 * L * r * s_n * math.sqrt(logp) / (t * math.sqrt(n))
    elif variant == "s1":
        val = 8 * L * r * s_n * math.sqrt(k_n * logp) / (t * math.sqrt(n))
    elif variant == "s2":
        val = 4 * L * r * s_n * math.sqrt(s_star_size) / (t * math.sqrt(n))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return min(val, 1.0)


def check_tail_bound(spec: LossSpec, sim: SimModelSpec, cfg: TheoryCheckConfig, variant: str = "s",
                     seed: int = 0) -> CheckResult:
    """Empirical P(sup > t) over ``mc_samples`` datasets against the closed-form bound.

    Passes when the empirical frequency is at most bound + 2 binomial SE
    (SE evaluated at the bound).
    """
    support = ground_truth(sim.model).true_support
    bound = lemma2_bound(variant, spec.lipschitz_constant, cfg.r, cfg.t, cfg.s_n, sim.n, sim.p,
                         cfg.k_n, len(support))
    if bound >= 1.0:
        raise ValueError("vacuous configuration: bound >= 1")
    probe = SupremumProbe(sim, spec, cfg, variant, seed=seed)
    exceed = 0
    for k in range(cfg.mc_samples):
        d, _ = generate(sim.with_seed(sim.seed + k))
        if probe.deviation(d.x, d.y) > cfg.t:
            exceed += 1
    emp = exceed / cfg.mc_samples
    se = math.sqrt(bound * (1 - bound) / cfg.mc_samples)
    return CheckResult(f"tail-{variant}", emp, bound, se, emp <= bound + 2 * se)


def separation_holds(coefs, support) -> bool:
    """min over the support of |coef| >= max over its complement."""
    a = np.abs(np.asarray(coefs))
    idx = np.asarray(support, dtype=np.intp) - 1
    mask = np.zeros(a.shape[0], bool)
    mask[idx] = True
    if (~mask).sum() == 0:
        return True
    return bool(a[mask].min() >= a[~mask].max())


def check_separation(spec: LossSpec, sim: SimModelSpec, lam: float, replications: int,
                     cfg=DEFAULT_CONFIG) -> float:
    """Fraction of replications whose Lasso fit at ``lam`` separates s* from the rest."""
    support = ground_truth(sim.model).true_support
    hits = 0
    for k in range(replications):
        d, _ = generate(sim.with_seed(sim.seed + k))
        fit = fit_lasso(standardize(d), spec, lam, cfg)
        hits += separation_holds(fit.coefficients, support)
    return hits / replications


# ---------------------------------------------------------------------------
# cone eigenvalue diagnostic
# ---------------------------------------------------------------------------


def _rayleigh(h, v):
    return float(v @ h @ v) / float(v @ v)


def _in_cone(v, s_mask, c):
    return np.abs(v[~s_mask]).sum() <= c * np.abs(v[s_mask]).sum() * (1 + 1e-12)


def estimate_kappa(h, support, epsilon: float, probes: int = 2000, seed: int = 0) -> float:
    """Upper estimate of the minimal Rayleigh quotient of ``h`` over the cone.

    The cone holds vectors whose l1 mass off ``support`` is at most
    (3 + epsilon) times the mass on it. Random cone members are refined by a
    shrinking random local search that stays inside the cone.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("h must be square")
    if np.max(np.abs(h - h.T), initial=0.0) > 1e-10:
        raise ValueError("h must be symmetric")
    if np.linalg.eigvalsh(h).min() < -1e-10:
        raise ValueError("h must be nonnegative definite")
    p = h.shape[0]
    idx = np.asarray(support, dtype=np.intp) - 1
    if idx.size == 0:
        raise ValueError("support must be nonempty")
    s_mask = np.zeros(p, bool)
    s_mask[idx] = True
    c = 3.0 + epsilon
    rng = np.random.default_rng(seed)

    def draw():
        v = np.zeros(p)
        g = rng.standard_normal(idx.size)
        v[s_mask] = g / np.linalg.norm(g)
        m = (~s_mask).sum()
        if m:
            e = rng.standard_normal(m)
            target = c * rng.random() * np.abs(v[s_mask]).sum()
            v[~s_mask] = e / np.abs(e).sum() * target
        return v

    cands = [draw() for _ in range(probes)]
    vals = np.array([_rayleigh(h, v) for v in cands])
    best_val = float(vals.min())
    for start in np.argsort(vals)[: min(5, probes)]:
        v = cands[start].copy()
        val, step = vals[start], 0.5
        for _ in range(400):
            trial = v + step * rng.standard_normal(p) * np.abs(v).max()
            if np.any(trial) and _in_cone(trial, s_mask, c):
                tv = _rayleigh(h, trial)
                if tv < val:
                    v, val = trial / np.linalg.norm(trial), tv
                    continue
            step *= 0.97
        best_val = min(best_val, val)
    return best_val


# ---------------------------------------------------------------------------
# product of a subgaussian and a bounded variable
# ---------------------------------------------------------------------------


def subgaussian_product_table(sigma: float, m_bound: float, t_grid, mc_samples: int, seed: int = 0,
                              bounded: str = "uniform") -> list:
    """Empirical MGF of S*T against exp(t^2 M^2 sigma^2 / 2) on ``t_grid``.

    S ~ N(0, sigma^2); T is uniform on [-M, M] (``bounded="uniform"``) or the
    constant M (``bounded="constant"``, the equality case).
    """
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if np.any(np.abs(t_grid) * m_bound * sigma > 3):
        raise ValueError("unstable grid point: |t| M sigma must not exceed 3")
    rng = np.random.default_rng(seed)
    s = sigma * rng.standard_normal(mc_samples)
    if bounded == "uniform":
        tt = rng.uniform(-m_bound, m_bound, mc_samples)
    elif bounded == "constant":
        tt = np.full(mc_samples, float(m_bound))
    else:
        raise ValueError(f"unknown bounded-variable law {bounded!r}")
    prod = s * tt
    rows = []
    for t in t_grid:
        vals = np.exp(t * prod)
        emp = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(mc_samples))
        bound = math.exp(0.5 * t * t * m_bound ** 2 * sigma ** 2)
        rel = se / emp if emp > 0 else 0.0
        rows.append(CheckResult(f"subg-product t={t:g}", emp, bound, se, emp <= bound * (1 + 3 * rel)))
    return rows


def check_subgaussian_product(sigma: float, m_bound: float, t_grid, mc_samples: int, seed: int = 0) -> bool:
    """True when every grid point passes :func:`subgaussian_product_table`."""
    return all(r.passed for r in subgaussian_product_table(sigma, m_bound, t_grid, mc_samples, seed))
