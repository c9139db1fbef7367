"""Simulation sweeps over (rho, loss, procedure, penalty) and their reports.

A sweep is split into cells, one per rho value. Each finished cell is
written to ``<output_dir>/cells/<hash>.json`` keyed by a hash of everything
that determines its content, so an interrupted sweep resumes where it
stopped and produces the same files as an uninterrupted one.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .data import destandardize_coefficients, standardize
from .family import NestedFamily
from .gic import (
    GicEvaluator,
    GicPenalty,
    cv_lambda,
    parse_penalty,
    select_lft,
    select_ss,
    select_sscv,
    select_ssnet,
)
from .loss import LossSpec, parse_loss
from .metrics import ExperimentReport, ReplicationRecord, aggregate
from .sim import SimModelSpec, generate
from .solver import DEFAULT_CONFIG, fit_path

logger = logging.getLogger(__name__)

MEASURES = ("p_inc", "p_equal", "p_supset", "angle")
PRESETS = ("m1_paper", "m2_paper", "m2_desk")
_FORMAT_VERSION = 1


def _split(text: str) -> list:
    return [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "m2"
    n: int = 500
    p: int = 150
    replications: int = 100
    rho_grid: tuple = (0.0,)
    procedures: tuple = ("ssnet",)
    penalties: tuple = ("ebic1",)
    losses: tuple = ("logistic",)
    base_seed: int = 0
    lambda_count: int = 20
    lambda_ratio: float = 0.01
    folds: int = 10
    huber_delta: float = 0.1
    ss_lambda: Optional[float] = None
    output_dir: str = "results"

    def __post_init__(self):
        SimModelSpec(self.model, self.n, self.p)
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        for r in self.rho_grid:
            if not -1.0 < r < 1.0:
                raise ValueError(f"rho {r} outside (-1, 1)")
        for proc in self.procedures:
            if proc not in ("ss", "ssnet", "sscv", "lft"):
                raise ValueError(f"unknown procedure {proc!r}")
        for pen in self.penalties:
            parse_penalty(pen)
        for loss in self.losses:
            parse_loss(loss)

    def combos(self) -> list:
        """(procedure, penalty label) pairs; LFT always uses the Fan-Tang penalty."""
        out = []
        for proc in self.procedures:
            if proc == "lft":
                out.append((proc, "fan_tang"))
            else:
                out.extend((proc, parse_penalty(pen).label) for pen in self.penalties)
        return out

    def plan(self) -> dict:
        datasets = self.replications * len(self.rho_grid)
        return {
            "cells": len(self.rho_grid),
            "datasets": datasets,
            "replications": datasets * len(self.losses),
            "selections": datasets * len(self.losses) * len(self.combos()),
        }


def load_config(path_or_text, **overrides) -> ExperimentConfig:
    """Read an INI-style sweep file (or a preset name)."""
    parser = configparser.ConfigParser()
    name = str(path_or_text)
    if name in PRESETS:
        parser.read_string(resources.files("ssgic.presets").joinpath(f"{name}.ini").read_text())
    elif Path(name).is_file():
        parser.read(name)
    else:
        parser.read_string(name)
    e = parser["experiment"]
    g = parser["grid"] if parser.has_section("grid") else {}
    s = parser["selection"] if parser.has_section("selection") else {}
    kw = dict(
        model=e.get("model", "m2"),
        n=int(e.get("n", 500)),
        p=int(e.get("p", 150)),
        replications=int(e.get("replications", 100)),
        base_seed=int(e.get("base_seed", 0)),
        rho_grid=tuple(float(r) for r in _split(g.get("rho", "0.0"))),
        procedures=tuple(_split(s.get("procedures", "ssnet"))),
        penalties=tuple(_split(s.get("penalties", "ebic1"))),
        losses=tuple(_split(s.get("losses", "logistic"))),
        lambda_count=int(s.get("lambda_count", 20)),
        lambda_ratio=float(s.get("lambda_ratio", 0.01)),
        folds=int(s.get("folds", 10)),
        huber_delta=float(s.get("huber_delta", 0.1)),
        ss_lambda=float(s["ss_lambda"]) if "ss_lambda" in s else None,
    )
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**kw)


# ---------------------------------------------------------------------------
# one replication
# ---------------------------------------------------------------------------


def _record(outcome, family_has_truth, d, truth, seed, p):
    b0, raw = destandardize_coefficients(d, outcome.refit.intercept, outcome.refit.coefficients)
    return ReplicationRecord(
        selected=tuple(outcome.selected),
        family_contained_truth=bool(family_has_truth),
        refit_coefficients=raw,
        true_support=truth.true_support,
        true_direction=truth.direction_vector(p),
        seed=seed,
        failure=outcome.info.get("failure", ""),
    )


def _failed(truth, p, seed, msg):
    return ReplicationRecord((), False, np.zeros(p), truth.true_support, truth.direction_vector(p), seed, msg)


def run_replication(cfg: ExperimentConfig, rho: float, seed: int) -> dict:
    """All (loss, procedure, penalty) outcomes on one simulated dataset."""
    sim = SimModelSpec(cfg.model, cfg.n, cfg.p, rho, seed)
    raw, truth = generate(sim)
    d = standardize(raw)
    out = {}
    ss_lam = cfg.ss_lambda if cfg.ss_lambda is not None else math.sqrt(math.log(cfg.p) / cfg.n)
    for loss_name in cfg.losses:
        spec = parse_loss(loss_name, cfg.huber_delta)
        try:
            path = fit_path(d, spec, cfg.lambda_count, cfg.lambda_ratio, DEFAULT_CONFIG)
            ev = GicEvaluator(d, spec, DEFAULT_CONFIG)
            cv = None
        except Exception as exc:  # record and continue
            for proc, pen in cfg.combos():
                out[(loss_name, proc, pen)] = _failed(truth, cfg.p, seed, f"{type(exc).__name__}: {exc}")
            continue
        for proc, pen_label in cfg.combos():
            key = (loss_name, proc, pen_label)
            try:
                pen = parse_penalty(pen_label)
                if proc == "ssnet":
                    o = select_ssnet(d, spec, pen=pen, evaluator=ev, path=path)
                    has = truth.true_support in o.family
                elif proc == "sscv":
                    if cv is None:
                        cv = cv_lambda(d, spec, cfg.folds, cfg.lambda_count, cfg.lambda_ratio,
                                       DEFAULT_CONFIG, seed, path=path)
                    o = select_sscv(d, spec, pen=pen, evaluator=ev, cv=cv)
                    has = truth.true_support in o.family
                elif proc == "ss":
                    o = select_ss(d, spec, ss_lam, pen, DEFAULT_CONFIG, evaluator=ev)
                    has = truth.true_support in o.family
                else:
                    o = select_lft(d, spec, path=path)
                    has = truth.true_support in {tuple(w) for w, _ in o.gic_table} | {()}
                out[key] = _record(o, has, d, truth, seed, cfg.p)
            except Exception as exc:
                logger.warning("replication seed=%d %s failed: %s", seed, key, exc)
                out[key] = _failed(truth, cfg.p, seed, f"{type(exc).__name__}: {exc}")
    return out


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


@dataclass
class ReportRow:
    model: str
    procedure: str
    penalty: str
    loss: str
    rho: float
    report: ExperimentReport

    def as_dict(self) -> dict:
        r = self.report
        failures = sum(bool(x.failure) for x in r.per_replication)
        return {
            "model": self.model, "procedure": self.procedure, "penalty": self.penalty,
            "loss": self.loss, "rho": self.rho, "l": r.l,
            "p_inc": r.p_inc, "p_equal": r.p_equal, "p_supset": r.p_supset, "angle": r.angle,
            "se_p_inc": r.se("p_inc"), "se_p_equal": r.se("p_equal"),
            "se_p_supset": r.se("p_supset"), "se_angle": r.se("angle"),
            "failures": failures,
        }


REPORT_COLUMNS = list(ReportRow("m2", "", "", "", 0.0,
                                ExperimentReport(0, 0, 0, 0, 1, [])).as_dict().keys())


def _cell_key(cfg: ExperimentConfig, rho: float) -> str:
    payload = asdict(cfg)
    payload.pop("output_dir")
    payload.pop("rho_grid")
    payload["rho"] = float(rho)
    payload["version"] = _FORMAT_VERSION
    blob = json.dumps(payload, sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


def _run_cell(cfg, rho, threads):
    seeds = [cfg.base_seed + k for k in range(cfg.replications)]
    if threads == 1:
        reps = [run_replication(cfg, rho, s) for s in seeds]
    else:
        reps = Parallel(n_jobs=threads)(delayed(run_replication)(cfg, rho, s) for s in seeds)
    cell = {}
    for rep in reps:
        for key, rec in rep.items():
            cell.setdefault("|".join(key), []).append(rec.to_dict())
    return cell


def run_experiment(cfg: ExperimentConfig, threads: int = 1, output_dir=None, resume: bool = True) -> list:
    """Run (or resume) a sweep; returns one :class:`ReportRow` per combination and rho."""
    out = Path(output_dir or cfg.output_dir)
    cells_dir = out / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for rho in cfg.rho_grid:
        key = _cell_key(cfg, rho)
        path = cells_dir / f"{key}.json"
        if resume and path.is_file():
            cell = json.loads(path.read_text())
            logger.info("rho=%g: loaded finished cell %s", rho, key)
        else:
            logger.info("rho=%g: running %d replications", rho, cfg.replications)
            cell = _run_cell(cfg, rho, threads)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(cell, sort_keys=True))
            tmp.replace(path)
        for loss in cfg.losses:
            for proc, pen in cfg.combos():
                recs = [ReplicationRecord.from_dict(r) for r in cell["|".join((loss, proc, pen))]]
                rows.append(ReportRow(cfg.model, proc, pen, loss, float(rho), aggregate(recs)))
    write_report_csv(rows, out / "report.csv")
    with (out / "records.jsonl").open("w") as fh:
        for row in rows:
            for rec in row.report.per_replication:
                line = {"model": row.model, "procedure": row.procedure, "penalty": row.penalty,
                        "loss": row.loss, "rho": row.rho, **rec.to_dict()}
                fh.write(json.dumps(line, sort_keys=True) + "\n")
    return rows


def write_report_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.as_dict().items()})


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else v


def read_report_csv(path) -> list:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plot_data(reports, measure: str) -> str:
    """Long-format CSV (model, procedure, penalty, loss, rho, value, se) for one measure.

    ``reports`` may hold :class:`ReportRow` objects or rows read back from a
    report CSV. Output is grouped by configuration and ordered by rho.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")
    flat = [r.as_dict() if isinstance(r, ReportRow) else dict(r) for r in reports]
    if flat and measure not in flat[0]:
        raise ValueError(f"measure {measure!r} absent from reports")
    groups: dict = {}
    for r in flat:
        groups.setdefault((r["model"], r["procedure"], r["penalty"], r["loss"]), []).append(r)
    grids = {tuple(sorted(float(r["rho"]) for r in g)) for g in groups.values()}
    if len(grids) > 1:
        raise ValueError("reports do not share a rho grid")
    flat = [r for g in groups.values() for r in sorted(g, key=lambda r: float(r["rho"]))]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "procedure", "penalty", "loss", "rho", "value", "se"])
    for r in flat:
        writer.writerow([r["model"], r["procedure"], r["penalty"], r["loss"],
                         _fmt(float(r["rho"])), _fmt(float(r[measure])), _fmt(float(r[f"se_{measure}"]))])
    return buf.getvalue()
