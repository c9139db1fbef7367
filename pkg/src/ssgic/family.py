"""Nested model families ordered by Lasso coefficient magnitude."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import predictor_set


@dataclass(frozen=True)
class NestedFamily:
    """Candidate models, each a sorted tuple of 1-based predictor indices.

    ``source`` is ``"single_lambda"`` for a prefix chain from one fit and
    ``"union_over_path"`` for the deduplicated union over a penalty grid.
    """

    models: tuple
    source: str = "single_lambda"

    def __len__(self):
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    def __contains__(self, w):
        return tuple(sorted(w)) in set(self.models)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["size", "indices"])
            for w in self.models:
                writer.writerow([len(w), ",".join(map(str, w))])


def order_support(fit) -> tuple:
    """Support indices by decreasing |coefficient|, ties by ascending index."""
    coefs = np.asarray(fit.coefficients)
    nz = np.flatnonzero(coefs)
    # lexsort keys: last is primary
    order = nz[np.lexsort((nz, -np.abs(coefs[nz])))]
    return tuple(int(j) + 1 for j in order)


def nested_from_order(order) -> NestedFamily:
    """The prefix chain {}, {j1}, {j1, j2}, ... of ``order``."""
    order = tuple(int(j) for j in order)
    predictor_set(order)  # rejects duplicates
    models = tuple(tuple(sorted(order[:k])) for k in range(len(order) + 1))
    return NestedFamily(models, "single_lambda")


def union_families(path) -> NestedFamily:
    """Union of the prefix chains of every fit on ``path``, plus the empty model."""
    fits = path.fits if hasattr(path, "fits") else path
    seen = {()}
    for fit in fits:
        seen.update(nested_from_order(order_support(fit)).models)
    models = tuple(sorted(seen, key=lambda w: (len(w), w)))
    return NestedFamily(models, "union_over_path")
