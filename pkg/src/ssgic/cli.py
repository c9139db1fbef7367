"""Command-line entry point ``ssgic``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .data import DataError, destandardize_coefficients, load_csv, standardize, write_csv
from .experiment import MEASURES, emit_plot_data, load_config, read_report_csv, run_experiment
from .gic import PROCEDURES, parse_penalty, select
from .loss import KINDS, DEFAULT_HUBER_DELTA, parse_loss
from .sim import M2Population, SimModelSpec, generate
from .solver import fit_path
from .theory import (
    TheoryCheckConfig,
    check_separation,
    check_tail_bound,
    estimate_kappa,
    m2_pseudo_true,
    subgaussian_product_table,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
CHECKS = ("tail-s", "tail-s1", "tail-s2", "separation", "kappa", "subg-product")

logger = logging.getLogger("ssgic")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_globals(p, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="random seed")
    p.add_argument("--threads", type=int, default=d if suppress else 1, help="worker processes")
    p.add_argument("--output", "-o", default=d, help="output file (or directory for experiment); stdout if omitted")
    p.add_argument("--verbose", "-v", action="count", default=d if suppress else 0)


def _add_loss(p):
    p.add_argument("--loss", choices=KINDS, default="logistic")
    p.add_argument("--huber-delta", type=float, default=DEFAULT_HUBER_DELTA)


def _add_input(p):
    p.add_argument("--input", "-i", required=True, help="CSV with a header row")
    p.add_argument("--response", default="y", help="name of the response column")


def _add_grid(p):
    p.add_argument("--lambda-count", type=int, default=20)
    p.add_argument("--lambda-ratio", type=float, default=0.01)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ssgic", description="Lasso screening and GIC selection for binary regression.")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw a dataset from model m1 or m2")
    _add_globals(p, True)
    p.add_argument("--model", choices=("m1", "m2"), default="m2")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--p", type=int, default=150)
    p.add_argument("--rho", type=float, default=0.0)

    p = sub.add_parser("path", help="Lasso path on standardized predictors")
    _add_globals(p, True)
    _add_input(p)
    _add_loss(p)
    _add_grid(p)

    p = sub.add_parser("select", help="two-stage selection (screening + GIC)")
    _add_globals(p, True)
    _add_input(p)
    _add_loss(p)
    _add_grid(p)
    p.add_argument("--procedure", choices=PROCEDURES, default="ssnet")
    p.add_argument("--penalty", default=None, help="aic, bic, ebic:<d>, fan-tang or custom:<a_n>")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="penalty for procedure ss; default sqrt(log p / n)")
    p.add_argument("--folds", type=int, default=10)

    p = sub.add_parser("experiment", help="run a simulation sweep from a config file or preset")
    _add_globals(p, True)
    p.add_argument("--config", required=True, help="INI file or preset name (m1_paper, m2_paper, m2_desk)")
    p.add_argument("--replications", type=int, default=None, help="override L")
    p.add_argument("--dry-run", action="store_true", help="print the plan without running")
    p.add_argument("--no-resume", action="store_true", help="recompute finished cells")

    p = sub.add_parser("theory-check", help="Monte Carlo checks of the tail and separation results")
    _add_globals(p, True)
    p.add_argument("--check", choices=CHECKS, action="append", required=True)
    p.add_argument("--loss", choices=KINDS, default="logistic")
    p.add_argument("--huber-delta", type=float, default=DEFAULT_HUBER_DELTA)
    p.add_argument("--model", choices=("m2",), default="m2")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--p", type=int, default=3)
    p.add_argument("--rho", type=float, default=0.0)
    f = TheoryCheckConfig()
    p.add_argument("--mc-samples", type=int, default=f.mc_samples)
    p.add_argument("--sup-probes", type=int, default=f.sup_probes)
    p.add_argument("--r", type=float, default=f.r)
    p.add_argument("--t", type=float, default=f.t)
    p.add_argument("--k-n", type=int, default=f.k_n)
    p.add_argument("--epsilon-cone", type=float, default=f.epsilon_cone)
    p.add_argument("--s-n", type=float, default=f.s_n)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="separation: default sqrt(log p / n)")
    p.add_argument("--replications", type=int, default=100, help="separation replications")
    p.add_argument("--min-fraction", type=float, default=0.9, help="separation pass threshold")
    p.add_argument("--probes", type=int, default=2000, help="kappa cone probes")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--m-bound", type=float, default=2.0)
    p.add_argument("--t-grid", default="-1,-0.5,0.5,1")

    p = sub.add_parser("plot-data", help="long-format CSV for one measure from a report CSV")
    _add_globals(p, True)
    p.add_argument("--input", "-i", required=True, help="report.csv written by experiment")
    p.add_argument("--measure", choices=MEASURES, required=True)
    return parser


# ---------------------------------------------------------------------------


def _emit(text: str, output):
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _f(v) -> str:
    return repr(float(v))


def _seed(args, default=0) -> int:
    s = getattr(args, "seed", None)
    return default if s is None else s


def cmd_simulate(args):
    sim = SimModelSpec(args.model, args.n, args.p, args.rho, _seed(args))
    d, _ = generate(sim)
    if args.output in (None, "-"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y", *d.names])
        for yi, row in zip(d.y, d.x):
            w.writerow([int(yi), *(_f(v) for v in row)])
        sys.stdout.write(buf.getvalue())
    else:
        write_csv(d, args.output)
    return EXIT_OK


def _load(args):
    d = load_csv(args.input, args.response)
    return standardize(d), parse_loss(args.loss, args.huber_delta)


def cmd_path(args):
    d, spec = _load(args)
    path = fit_path(d, spec, args.lambda_count, args.lambda_ratio)
    bad = [f for f in path.fits if not f.converged]
    rows = [[_f(f.lam), len(f.support), _f(f.objective), _f(f.intercept), *map(_f, f.coefficients)]
            for f in path.fits]
    _emit(_csv_text(["lambda", "support_size", "objective", "intercept", *d.names], rows), args.output)
    if bad:
        logger.error("%d of %d path fits did not converge", len(bad), len(path.fits))
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_select(args):
    d, spec = _load(args)
    pen = parse_penalty(args.penalty) if args.penalty else None
    lam = args.lam
    if args.procedure == "ss" and lam is None:
        lam = math.sqrt(math.log(d.p) / d.n)
    out = select(d, spec, args.procedure, pen, lam=lam, m=args.lambda_count, ratio=args.lambda_ratio,
                 folds=args.folds, seed=_seed(args))
    if out.info.get("failure"):
        logger.error("selection failed: %s", out.info["failure"])
        return EXIT_NUMERICAL
    b0, raw = destandardize_coefficients(d, out.refit.intercept, out.refit.coefficients)
    names = [d.names[j - 1] for j in out.selected]
    lines = [
        f"procedure,{out.procedure}",
        f"penalty,{out.penalty.label}",
        "selected," + " ".join(map(str, out.selected)),
        "selected_names," + " ".join(names),
        f"gic,{_f(out.gic)}",
        f"intercept,{_f(b0)}",
        *(f"{name},{_f(raw[j - 1])}" for name, j in zip(names, out.selected)),
    ]
    table_rows = [[" ".join(map(str, w)), len(w), "" if math.isnan(v) else _f(v)] for w, v in out.gic_table]
    table = _csv_text(["model", "size", "gic"], table_rows)
    if args.output in (None, "-"):
        sys.stdout.write("\n".join(lines) + "\n\n" + table)
    else:
        sys.stdout.write("\n".join(lines) + "\n")
        Path(args.output).write_text(table)
    return EXIT_OK


def cmd_experiment(args):
    cfg = load_config(args.config, replications=args.replications, base_seed=args.seed,
                      output_dir=args.output)
    if args.dry_run:
        plan = cfg.plan()
        sys.stdout.write("".join(f"{k},{v}\n" for k, v in plan.items()))
        return EXIT_OK
    rows = run_experiment(cfg, threads=args.threads, resume=not args.no_resume)
    failures = sum(r.as_dict()["failures"] for r in rows)
    sys.stdout.write(f"wrote {len(rows)} report rows to {Path(cfg.output_dir) / 'report.csv'}\n")
    if failures:
        logger.warning("%d replication failures recorded", failures)
    return EXIT_OK


def cmd_theory_check(args):
    cfg = TheoryCheckConfig(args.mc_samples, args.sup_probes, args.r, args.t, args.k_n,
                            args.epsilon_cone, args.s_n)
    spec = parse_loss(args.loss, args.huber_delta)
    seed = _seed(args)
    sim = SimModelSpec(args.model, args.n, args.p, args.rho, seed)
    results = []
    for check in args.check:
        if check.startswith("tail-"):
            results.append(check_tail_bound(spec, sim, cfg, check[5:], seed=seed).row())
        elif check == "separation":
            lam = args.lam if args.lam is not None else math.sqrt(math.log(args.p) / args.n)
            frac = check_separation(spec, sim, lam, args.replications)
            se = math.sqrt(frac * (1 - frac) / args.replications)
            results.append({"check": "separation", "estimate": frac, "bound": args.min_fraction,
                            "se": se, "pass": frac + 2 * se >= args.min_fraction})
        elif check == "kappa":
            b0, beta = m2_pseudo_true(args.rho, args.p, spec)
            h = M2Population(args.rho, args.p).hessian(spec, b0, beta)
            kappa = estimate_kappa(h, (1, 2), cfg.epsilon_cone, args.probes, seed)
            lo = float(np.linalg.eigvalsh(h).min())
            # diagnostic: the estimate is an upper bound and must not fall below lambda_min
            results.append({"check": "kappa", "estimate": kappa, "bound": lo, "se": float("nan"),
                            "pass": kappa >= lo - 1e-9})
        else:
            t_grid = [float(t) for t in args.t_grid.split(",") if t.strip()]
            for r in subgaussian_product_table(args.sigma, args.m_bound, t_grid, cfg.mc_samples, seed):
                results.append(r.row())
    rows = [[r["check"], _f(r["estimate"]), _f(r["bound"]), _f(r["se"]), str(bool(r["pass"])).lower()]
            for r in results]
    _emit(_csv_text(["check", "estimate", "bound", "se", "pass"], rows), args.output)
    return EXIT_OK


def cmd_plot_data(args):
    path = Path(args.input)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    _emit(emit_plot_data(read_report_csv(path), args.measure), args.output)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "path": cmd_path,
    "select": cmd_select,
    "experiment": cmd_experiment,
    "theory-check": cmd_theory_check,
    "plot-data": cmd_plot_data,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose or 0, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is None or args.threads < 1:
        sys.stderr.write("ssgic: --threads must be a positive integer\n")
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        sys.stderr.write(f"ssgic: data error: {exc}\n")
        return EXIT_DATA
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        sys.stderr.write(f"ssgic: numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except OSError as exc:
        sys.stderr.write(f"ssgic: i/o error: {exc}\n")
        return EXIT_DATA
    except ValueError as exc:
        sys.stderr.write(f"ssgic: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
