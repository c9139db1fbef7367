"""Selection-quality measures aggregated over simulation replications."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class ReplicationRecord:
    selected: tuple
    family_contained_truth: bool
    refit_coefficients: np.ndarray
    true_support: tuple
    true_direction: np.ndarray
    seed: int = -1
    failure: str = ""

    def to_dict(self) -> dict:
        out = asdict(self)
        out["selected"] = list(self.selected)
        out["true_support"] = list(self.true_support)
        out["refit_coefficients"] = [float(v) for v in np.asarray(self.refit_coefficients)]
        out["true_direction"] = [float(v) for v in np.asarray(self.true_direction)]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ReplicationRecord":
        return cls(
            selected=tuple(d["selected"]),
            family_contained_truth=bool(d["family_contained_truth"]),
            refit_coefficients=np.asarray(d["refit_coefficients"], dtype=np.float64),
            true_support=tuple(d["true_support"]),
            true_direction=np.asarray(d["true_direction"], dtype=np.float64),
            seed=int(d.get("seed", -1)),
            failure=d.get("failure", ""),
        )


@dataclass
class ExperimentReport:
    p_inc: float
    p_equal: float
    p_supset: float
    angle: float
    l: int
    per_replication: list = field(default_factory=list, repr=False)

    def se(self, measure: str) -> float:
        """Binomial SE for the P-measures; SE of the mean for ``angle``."""
        if measure == "angle":
            a = [angle_statistic(r.true_direction, r.refit_coefficients) for r in self.per_replication]
            return float(np.std(a, ddof=1) / math.sqrt(len(a))) if len(a) > 1 else 0.0
        v = getattr(self, measure)
        return math.sqrt(v * (1.0 - v) / self.l)


def angle_statistic(true_direction, estimated) -> float:
    """arccos |cos angle(true_direction, estimated)|, with pi/2 for a zero vector."""
    a = np.asarray(true_direction, dtype=np.float64)
    b = np.asarray(estimated, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    sa, sb = np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0)
    if sa == 0.0 or sb == 0.0:
        return math.pi / 2
    # rescale first: tiny entries would underflow when squared
    a, b = a / sa, b / sb
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    c = min(abs(float(a @ b)) / denom, 1.0)
    return math.acos(c)


def aggregate(records) -> ExperimentReport:
    """Average the inclusion, equality, superset and angle measures."""
    records = list(records)
    if not records:
        raise ValueError("cannot aggregate an empty list of records")
    L = len(records)
    inc = sum(r.family_contained_truth for r in records)
    eq = sum(tuple(sorted(r.selected)) == tuple(sorted(r.true_support)) for r in records)
    sup = sum(set(r.true_support) <= set(r.selected) for r in records)
    ang = [angle_statistic(r.true_direction, r.refit_coefficients) for r in records]
    return ExperimentReport(
        p_inc=inc / L, p_equal=eq / L, p_supset=sup / L, angle=float(np.mean(ang)), l=L,
        per_replication=records,
    )
