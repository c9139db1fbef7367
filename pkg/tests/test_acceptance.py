"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest
from scipy.special import expit

from oracles import grid_search_min
from ssgic.data import Dataset, destandardize_coefficients, standardize
from ssgic.experiment import ExperimentConfig, load_config, run_experiment
from ssgic.gic import GicPenalty, gic, penalty_value
from ssgic.loss import LossSpec
from ssgic.metrics import angle_statistic
from ssgic.sim import SimModelSpec, generate, sample_ar1_gaussian
from ssgic.solver import fit_lasso, lambda_max, refit, verify_kkt
from ssgic.theory import (
    TheoryCheckConfig,
    check_separation,
    check_subgaussian_product,
    check_tail_bound,
    lemma2_bound,
)

LOSSES = [LossSpec("logistic"), LossSpec("quadratic"), LossSpec("huber", delta=0.5)]


@pytest.fixture
def verdict(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, f"{label}: {detail}"

    return emit


def binom_se(p, n):
    return math.sqrt(max(p * (1 - p), 0.0) / n)


# ---------------------------------------------------------------------------
# shared desk-scale M2 sweep (criteria 3, 4, 5 and the high-rho check)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    cfg = load_config("m2_desk")
    rows = run_experiment(cfg, output_dir=tmp_path_factory.mktemp("desk"))
    return {(r.penalty, r.rho): r.report for r in rows}


# ---------------------------------------------------------------------------


def _orthonormal(rng, n, p):
    a = rng.standard_normal((n, p))
    a -= a.mean(axis=0)
    q, _ = np.linalg.qr(a)
    return standardize(Dataset(q * math.sqrt(n), (rng.random(n) < 0.5).astype(float)))


def test_criterion_01_solver_kkt(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst, fits, unconverged = 0.0, 0, 0
    for i in range(200):
        n = int(rng.integers(10, 101))
        p = int(rng.integers(1, 21))
        x = rng.standard_normal((n, p)) * rng.uniform(0.5, 3.0, p)
        y = (rng.random(n) < expit(x[:, 0] if p else 0.0)).astype(float)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        d = standardize(Dataset(x, y))
        spec = LOSSES[i % 3]
        lam = lambda_max(d, spec) * rng.uniform(0.01, 1.0)
        fit = fit_lasso(d, spec, lam)
        if not fit.converged:
            unconverged += 1
            continue
        fits += 1
        worst = max(worst, verify_kkt(d, spec, fit))
    soft_err = 0.0
    for seed in range(20):
        d = _orthonormal(np.random.default_rng(seed), 60, 8)
        lam = 0.02 * (1 + seed % 5)
        fit = fit_lasso(d, LossSpec("quadratic"), lam)
        c = (d.x ** 2).sum(axis=0) / d.n
        z = d.x.T @ (d.y - d.y.mean()) / d.n
        want = np.sign(z) * np.maximum(np.abs(z) - lam, 0.0) / c
        soft_err = max(soft_err, float(np.max(np.abs(fit.coefficients - want))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and soft_err <= 1e-8 and elapsed < 60 and unconverged == 0
    verdict("criterion 1 (solver KKT)", ok,
            f"{fits}/200 converged, max KKT {worst:.2e} <= 1e-6, soft-threshold err {soft_err:.1e} <= 1e-8, "
            f"{elapsed:.1f}s < 60s")


def _risk_fn(spec, a, y):
    def risk(theta):
        eta = theta @ a.T
        if spec.kind == "logistic":
            return np.mean(np.logaddexp(0.0, -eta * (2 * y - 1)), axis=-1)
        r = y - eta
        if spec.kind == "quadratic":
            return np.mean(0.5 * r * r, axis=-1)
        ab = np.abs(r)
        return np.mean(np.where(ab <= spec.delta, 0.5 * r * r, spec.delta * ab - 0.5 * spec.delta ** 2), axis=-1)

    return risk


def test_criterion_02_gic_oracle(verdict):
    rng = np.random.default_rng(77)
    start = time.perf_counter()
    worst = 0.0
    for i in range(20):
        n, p = 50 + 5 * i, 6
        d = standardize(Dataset(rng.standard_normal((n, p)), (rng.random(n) < 0.5).astype(float)))
        spec = LOSSES[i % 3]
        k = i % 3
        w = tuple(sorted(rng.choice(np.arange(1, p + 1), size=k, replace=False).tolist()))
        pen = GicPenalty("ebic", d=1.0) if i % 2 else GicPenalty("bic")
        a = np.column_stack([np.ones(n)] + [d.x[:, j - 1] for j in w])
        val, _ = grid_search_min(_risk_fn(spec, a, d.y), np.zeros(k + 1), 3.0, points=31 if k == 2 else 61)
        want = n * val + penalty_value(pen, n, p) * (k + 1)
        got = gic(d, spec, w, pen)
        worst = max(worst, abs(got - want) / abs(want))
    elapsed = time.perf_counter() - start
    verdict("criterion 2 (GIC oracle)", worst <= 1e-3 and elapsed < 120,
            f"max relative error {worst:.2e} <= 1e-3 over 20 instances, {elapsed:.1f}s < 120s")


def test_criterion_03_m2_headline(desk, verdict):
    r = desk[("ebic1", 0.0)]
    ok = r.p_equal >= 0.80 and r.p_supset >= 0.90 and r.angle <= 0.20
    verdict("criterion 3 (M2 headline)", ok,
            f"SSnet+EBIC1 P_equal {r.p_equal:.2f} >= 0.80, P_supset {r.p_supset:.2f} >= 0.90, "
            f"ANGLE {r.angle:.3f} <= 0.20 (L={r.l})")


def test_criterion_04_penalty_ordering(desk, verdict):
    e, b = desk[("ebic1", 0.0)], desk[("bic", 0.0)]
    diff = e.p_equal - b.p_equal
    se = math.sqrt(binom_se(e.p_equal, e.l) ** 2 + binom_se(b.p_equal, b.l) ** 2)
    verdict("criterion 4 (EBIC1 vs BIC)", diff - 2 * se >= 0.10,
            f"P_equal EBIC1 {e.p_equal:.2f} - BIC {b.p_equal:.2f} = {diff:.2f}, minus 2 SE ({2 * se:.3f}) >= 0.10")


def test_criterion_05_collinearity(desk, verdict):
    recs = [x for x in desk[("ebic1", 0.0)].per_replication if x.selected == (1, 2)]
    cos = [math.cos(angle_statistic(x.true_direction, x.refit_coefficients)) for x in recs]
    mean_cos = float(np.mean(cos))
    raw, _ = generate(SimModelSpec("m2", 100_000, 2, 0.0, 11))
    d = standardize(raw)
    fit = refit(d, LossSpec("logistic"), (1, 2))
    _, b = destandardize_coefficients(d, fit.intercept, fit.coefficients)
    rel = abs(b[0] - b[1]) / (0.5 * (b[0] + b[1]))
    verdict("criterion 5 (collinearity)", mean_cos >= 0.95 and rel <= 0.05,
            f"mean |cos| {mean_cos:.4f} >= 0.95 over {len(recs)} replications; "
            f"n=1e5 refit ({b[0]:.3f}, {b[1]:.3f}) differ by {100 * rel:.2f}% <= 5%")


def test_criterion_06_consistency_trend(desk, verdict, tmp_path):
    pe = {}
    for n in (125, 250):
        cfg = ExperimentConfig(n=n, replications=100, penalties=("ebic1",))
        (row,) = run_experiment(cfg, output_dir=tmp_path / str(n))
        pe[n] = row.report.p_equal
    pe[500] = desk[("ebic1", 0.0)].p_equal
    ns = sorted(pe)
    ok = all(pe[b] >= pe[a] - 2 * math.sqrt(binom_se(pe[a], 100) ** 2 + binom_se(pe[b], 100) ** 2)
             for a, b in zip(ns, ns[1:]))
    verdict("criterion 6 (consistency trend)", ok,
            "P_equal by n: " + ", ".join(f"{n}: {pe[n]:.2f}" for n in ns) + " nondecreasing within 2 SE")


@pytest.mark.parametrize("variant", ["s", "s1", "s2"])
def test_criterion_07_tail_bounds(variant, verdict):
    sim = SimModelSpec("m2", 200, 3, 0.0, 0)
    # threshold placing the closed-form bound at 0.5
    raw = lemma2_bound(variant, 1.0, 1.0, 1000.0, 1.0, sim.n, sim.p, k_n=3, s_star_size=2) * 1000.0
    cfg = TheoryCheckConfig(mc_samples=500, sup_probes=200, r=1.0, t=raw / 0.5, k_n=3)
    res = check_tail_bound(LossSpec("logistic"), sim, cfg, variant)
    ok = res.bound < 0.9 and res.passed and res.estimate <= res.bound + 2 * res.se
    verdict(f"criterion 7 (tail bound {variant})", ok,
            f"frequency {res.estimate:.3f} <= bound {res.bound:.3f} + 2 SE ({res.se:.3f}), t={cfg.t:.3f}, 500 datasets")


def test_criterion_08_separation(verdict):
    fr = {}
    reps = 100
    for n in (125, 500, 2000):
        sim = SimModelSpec("m2", n, 150, 0.0, 0)
        fr[n] = check_separation(LossSpec("logistic"), sim, math.sqrt(math.log(150) / n), reps)
    ns = sorted(fr)
    trend = all(fr[b] >= fr[a] - 2 * math.sqrt(binom_se(fr[a], reps) ** 2 + binom_se(fr[b], reps) ** 2)
                for a, b in zip(ns, ns[1:]))
    verdict("criterion 8 (separation)", trend and fr[2000] >= 0.9,
            "separated fraction by n: " + ", ".join(f"{n}: {fr[n]:.2f}" for n in ns) + "; >= 0.9 at n=2000")


def test_criterion_09_simulation_fidelity(verdict):
    d1, _ = generate(SimModelSpec("m1", 100_000, 12, 0.0, 5))
    corr = float(np.corrcoef(d1.x[:, 0], d1.x[:, 7])[0, 1])
    cov_err = 0.0
    for rho in (-0.7, 0.0, 0.5, 0.9):
        z = sample_ar1_gaussian(100_000, 8, rho, 9)
        idx = np.arange(8)
        cov_err = max(cov_err, float(np.max(np.abs(np.cov(z, rowvar=False) - rho ** np.abs(idx[:, None] - idx)))))
    d = standardize(Dataset(d1.x[:, 5:9], d1.y))
    fit = refit(d, LossSpec("logistic"), (1, 2, 3, 4))
    b0, b = destandardize_coefficients(d, fit.intercept, fit.coefficients)
    a = np.column_stack([np.ones(d1.n), d1.x[:, 5:9]])
    pr = expit(b0 + d1.x[:, 5:9] @ b)
    info = (a * (pr * (1 - pr))[:, None]).T @ a
    se = np.sqrt(np.diag(np.linalg.inv(info)))[1:]
    z = np.abs(b - np.array([3.0, 3.0, 1.0, 1.0])) / se
    ok = abs(corr - 3 / math.sqrt(15)) <= 0.02 and cov_err <= 0.02 and np.all(z <= 3)
    verdict("criterion 9 (simulation fidelity)", ok,
            f"Cor(X1, X8) {corr:.4f} vs {3 / math.sqrt(15):.4f} (tol 0.02); AR(1) cov max err {cov_err:.4f} <= 0.02; "
            f"M1 refit {np.round(b, 3).tolist()} max |z| {z.max():.2f} <= 3")


def test_criterion_10_subgaussian_product(verdict):
    ok = check_subgaussian_product(1.0, 2.0, [-1.0, -0.5, 0.5, 1.0], 10 ** 6, seed=0)
    verdict("criterion 10 (subgaussian product)", ok, "sigma=1, M=2, t in {+-0.5, +-1}, 1e6 samples")


def test_high_rho_degradation(desk, verdict):
    hi, lo = desk[("ebic1", 0.75)], desk[("ebic1", 0.0)]
    bound = lo.p_equal + 2 * binom_se(lo.p_equal, lo.l)
    verdict("high-rho check", hi.p_equal <= bound,
            f"P_equal(0.75) {hi.p_equal:.2f} <= P_equal(0) + 2 SE = {bound:.3f}")
