"""Generalized information criterion and the two-stage selection procedures.

GIC(w) = n * R_n(b(w)) + a_n * (|w| + 1), where b(w) is the unpenalized
empirical risk minimizer over the intercept and the predictors in w. The
procedures differ in how the candidate family is screened:

``ss``
    prefix chain of one Lasso fit at a fixed penalty;
``ssnet``
    union of prefix chains along a penalty grid;
``sscv``
    prefix chain at the penalty chosen by K-fold CV with the 1SE rule;
``lft``
    no refitting: GIC with Fan-Tang penalty evaluated on the Lasso fits
    themselves, selecting the support of the best one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import DataError, Dataset, predictor_set
from .family import NestedFamily, nested_from_order, order_support, union_families
from .loss import LossSpec, _value
from .solver import (
    DEFAULT_CONFIG,
    DegenerateResponseError,
    PenalizedFit,
    SolverConfig,
    _path_on,
    _Problem,
    fit_lasso,
    fit_path,
    path_grid,
    refit,
)

PENALTY_KINDS = ("aic", "bic", "ebic", "fan_tang", "custom")
PROCEDURES = ("ss", "ssnet", "sscv", "lft")


def _short(x: float) -> str:
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


@dataclass(frozen=True)
class GicPenalty:
    """Per-parameter GIC penalty a_n.

    ``d`` is the EBIC exponent and ``a_n`` the constant for ``custom``.
    """

    kind: str = "bic"
    d: Optional[float] = None
    a_n: Optional[float] = None
    counts_intercept: bool = True

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ValueError(f"unknown penalty {self.kind!r}; expected one of {PENALTY_KINDS}")
        if self.kind == "ebic" and not (self.d is not None and self.d > 0):
            raise ValueError("ebic penalty needs d > 0")
        if self.kind == "custom" and not (self.a_n is not None and self.a_n > 0):
            raise ValueError("custom penalty needs a_n > 0")

    @property
    def label(self) -> str:
        # shortest exact form, so parse_penalty(label) gives back the same penalty
        if self.kind == "ebic":
            return f"ebic{_short(self.d)}"
        if self.kind == "custom":
            return f"custom{_short(self.a_n)}"
        return self.kind


def parse_penalty(text: str) -> GicPenalty:
    """Parse ``aic``, ``bic``, ``ebic:<d>`` / ``ebic<d>``, ``fan-tang`` or ``custom:<a_n>`` / ``custom<a_n>``."""
    t = text.strip().lower().replace("-", "_")
    if t in ("aic", "bic", "fan_tang"):
        return GicPenalty(t)
    if t.startswith("ebic"):
        rest = t[4:].lstrip(":")
        return GicPenalty("ebic", d=float(rest) if rest else 1.0)
    if t.startswith("custom") and len(t) > 6:
        return GicPenalty("custom", a_n=float(t[6:].lstrip(":")))
    raise ValueError(f"cannot parse penalty {text!r}")


def penalty_value(pen: GicPenalty, n: int, p_n: int) -> float:
    """The penalty a_n for sample size ``n`` and ``p_n`` predictors."""
    if n < 2:
        raise ValueError("penalty needs n >= 2")
    if pen.kind == "aic":
        return 2.0
    if pen.kind == "bic":
        return math.log(n)
    if pen.kind == "ebic":
        return math.log(n) + 2.0 * pen.d * math.log(p_n)
    if pen.kind == "fan_tang":
        if n <= math.e:
            raise ValueError("fan-tang penalty needs n > e")
        return math.log(math.log(n)) * math.log(p_n)
    return float(pen.a_n)


@dataclass
class SelectionOutcome:
    selected: tuple
    refit: PenalizedFit
    gic_table: list
    procedure: str
    penalty: Optional[GicPenalty] = None
    family: Optional[NestedFamily] = None
    lam: Optional[float] = None
    info: dict = field(default_factory=dict)

    @property
    def gic(self) -> float:
        return min((v for _, v in self.gic_table if not math.isnan(v)), default=math.inf)


class GicEvaluator:
    """GIC values on one dataset, caching the unpenalized refits by model.

    The cache is not safe for concurrent insertion; use one evaluator per
    worker.
    """

    def __init__(self, d: Dataset, spec: LossSpec, cfg: SolverConfig = DEFAULT_CONFIG):
        self.d, self.spec, self.cfg = d, spec, cfg
        self._fits: dict = {}

    def fit(self, w) -> PenalizedFit:
        w = predictor_set(w, self.d.p)
        hit = self._fits.get(w)
        if hit is not None:
            return hit
        warm = None
        for j in range(len(w) - 1, -1, -1):
            parent = self._fits.get(w[:j] + w[j + 1:])
            if parent is not None and parent.converged:
                warm = np.concatenate([[parent.intercept], parent.coefficients[np.asarray(w) - 1]])
                warm[1 + j] = 0.0
                break
        fit = refit(self.d, self.spec, w, self.cfg, warm_start=warm)
        self._fits[w] = fit
        return fit

    def risk_term(self, w) -> float:
        """n * R_n at the refit, or +inf when the refit failed (e.g. separation)."""
        fit = self.fit(w)
        if not fit.converged:
            return math.inf
        return self.d.n * fit.risk

    def gic(self, w, pen: GicPenalty) -> float:
        a_n = penalty_value(pen, self.d.n, self.d.p)
        return self.risk_term(w) + a_n * (len(w) + int(pen.counts_intercept))

    def minimize(self, family, pen: GicPenalty, prune: bool = True):
        """Minimize GIC over ``family``; returns (selected, table).

        Ties go to the smaller model, then the lexicographically smaller one.
        With ``prune`` a model is skipped (table value NaN) when its penalty
        alone exceeds the best GIC found so far; losses are nonnegative so it
        cannot win. Models too large to be identified get +inf.
        """
        n = self.d.n
        a_n = penalty_value(pen, n, self.d.p)
        c = int(pen.counts_intercept)
        models = sorted(family, key=lambda w: (len(w), w))
        values = {}
        best, best_w = math.inf, None
        for w in models:
            lower = a_n * (len(w) + c)
            if len(w) + 1 > n:
                values[w] = math.inf
                continue
            if prune and lower > best and w not in self._fits:
                values[w] = math.nan
                continue
            v = self.risk_term(w) + lower
            values[w] = v
            if v < best:
                best, best_w = v, w
        table = [(w, values[w]) for w in family]
        return best_w, table


def gic(
    d: Dataset,
    spec: LossSpec,
    w,
    pen: GicPenalty,
    cfg: SolverConfig = DEFAULT_CONFIG,
    cache: Optional[GicEvaluator] = None,
) -> float:
    """GIC of model ``w``; +inf when the refit fails."""
    ev = cache if cache is not None else GicEvaluator(d, spec, cfg)
    w = predictor_set(w, d.p)
    if len(w) + 1 > d.n:
        raise DataError(f"model of size {len(w)} not identifiable with n={d.n}")
    return ev.gic(w, pen)


def _outcome(ev, family, pen, procedure, lam=None, info=None, prune=True):
    selected, table = ev.minimize(family, pen, prune=prune)
    info = dict(info or {})
    if selected is None:
        info["failure"] = "no model in the family has finite GIC"
        selected = ()
    return SelectionOutcome(
        selected=selected, refit=ev.fit(selected), gic_table=table, procedure=procedure,
        penalty=pen, family=family, lam=lam, info=info,
    )


def select_ss(d, spec, lam, pen, cfg=DEFAULT_CONFIG, evaluator=None, prune=True) -> SelectionOutcome:
    """Screen with one Lasso fit at ``lam``, then minimize GIC over its prefix chain."""
    fit = fit_lasso(d, spec, lam, cfg)
    family = nested_from_order(order_support(fit))
    ev = evaluator or GicEvaluator(d, spec, cfg)
    return _outcome(ev, family, pen, "ss", lam=float(lam), prune=prune)


def select_ssnet(d, spec, m=20, ratio=0.01, pen=GicPenalty("ebic", d=1.0), cfg=DEFAULT_CONFIG,
                 evaluator=None, path=None, prune=True) -> SelectionOutcome:
    """Minimize GIC over the union of prefix chains along a Lasso path."""
    path = path if path is not None else fit_path(d, spec, m, ratio, cfg)
    family = union_families(path)
    ev = evaluator or GicEvaluator(d, spec, cfg)
    return _outcome(ev, family, pen, "ssnet", prune=prune, info={"path_length": len(path)})


def cv_lambda(d: Dataset, spec: LossSpec, folds: int = 10, m: int = 20, ratio: float = 0.01,
              cfg: SolverConfig = DEFAULT_CONFIG, seed: int = 0, path=None):
    """Pick a penalty by K-fold CV on held-out empirical risk with the 1SE rule.

    Returns ``(index, path, curve)`` where ``index`` points into
    ``path.fits`` and ``curve`` holds the CV means and standard errors over
    the retained grid.
    """
    n = d.n
    if folds < 2 or folds > n:
        raise ValueError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    path = path if path is not None else fit_path(d, spec, m, ratio, cfg)
    grid = path.lambdas
    rng = np.random.default_rng(seed)
    parts = np.array_split(rng.permutation(n), folds)
    risks = []
    for held in parts:
        train = np.ones(n, dtype=bool)
        train[held] = False
        xt, yt = d.x[train], d.y[train]
        try:
            fits = _path_on(_Problem(xt, yt, spec), yt, grid, cfg, None)
        except DegenerateResponseError:
            continue  # single-class training fold: no usable fit
        xv, yv = d.x[held], d.y[held]
        risks.append([float(np.mean(_value(spec, f.intercept + xv @ f.coefficients, yv))) for f in fits])
    if not risks:
        return 0, path, {"mean": [], "se": [], "folds_used": 0}
    risks = np.asarray(risks)
    k = risks.shape[0]
    mean = risks.mean(axis=0)
    se = risks.std(axis=0, ddof=1) / np.sqrt(k) if k > 1 else np.zeros_like(mean)
    idx = one_se_index(mean, se)
    return idx, path, {"mean": mean.tolist(), "se": se.tolist(), "folds_used": k, "argmin": int(np.argmin(mean))}


def one_se_index(mean, se) -> int:
    """First (largest-lambda) grid index whose mean CV risk is within one SE of the minimum.

    ``mean`` and ``se`` are ordered by decreasing lambda. Ties at the minimum
    go to the larger lambda.
    """
    mean, se = np.asarray(mean, dtype=np.float64), np.asarray(se, dtype=np.float64)
    best = int(np.argmin(mean))
    return int(np.flatnonzero(mean <= mean[best] + se[best])[0])


def select_sscv(d, spec, folds=10, m=20, ratio=0.01, pen=GicPenalty("ebic", d=1.0), cfg=DEFAULT_CONFIG,
                seed=0, evaluator=None, cv=None, prune=True) -> SelectionOutcome:
    """SS at the penalty chosen by cross-validation (1SE rule)."""
    idx, path, curve = cv if cv is not None else cv_lambda(d, spec, folds, m, ratio, cfg, seed)
    fit = path.fits[idx]
    family = nested_from_order(order_support(fit))
    ev = evaluator or GicEvaluator(d, spec, cfg)
    return _outcome(ev, family, pen, "sscv", lam=fit.lam, prune=prune, info={"cv": curve})


def select_lft(d, spec, m=20, ratio=0.01, cfg=DEFAULT_CONFIG, path=None,
               pen=GicPenalty("fan_tang")) -> SelectionOutcome:
    """Fan-Tang GIC evaluated on Lasso fits; selects the best fit's support."""
    path = path if path is not None else fit_path(d, spec, m, ratio, cfg)
    n = d.n
    a_n = penalty_value(pen, n, d.p)
    c = int(pen.counts_intercept)
    table = []
    best, best_i = math.inf, 0
    for i, fit in enumerate(path.fits):
        v = n * fit.risk + a_n * (len(fit.support) + c)
        table.append((fit.support, v))
        if v < best:
            best, best_i = v, i
    chosen = path.fits[best_i]
    return SelectionOutcome(
        selected=chosen.support, refit=chosen, gic_table=table, procedure="lft",
        penalty=pen, lam=chosen.lam, info={"index": best_i},
    )


def select(d, spec, procedure="ssnet", pen=None, cfg=DEFAULT_CONFIG, lam=None, m=20, ratio=0.01,
           folds=10, seed=0) -> SelectionOutcome:
    """Dispatch to one of the four procedures by name."""
    if procedure not in PROCEDURES:
        raise ValueError(f"unknown procedure {procedure!r}; expected one of {PROCEDURES}")
    if procedure == "lft":
        return select_lft(d, spec, m, ratio, cfg, pen=pen or GicPenalty("fan_tang"))
    pen = pen or GicPenalty("ebic", d=1.0)
    if procedure == "ss":
        if lam is None:
            raise ValueError("procedure ss needs a penalty lambda")
        return select_ss(d, spec, lam, pen, cfg)
    if procedure == "ssnet":
        return select_ssnet(d, spec, m, ratio, pen, cfg)
    return select_sscv(d, spec, folds, m, ratio, pen, cfg, seed)
