"""scikit-learn compatible wrappers around the Lasso solver and GIC selection.

Both estimators standardize X internally and report coefficients on the
original scale of X. Labels may be any two distinct values; ``classes_[1]``
is coded as the event Y = 1.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_is_fitted, check_X_y, validate_data

from .data import Dataset, destandardize_coefficients, standardize
from .gic import parse_penalty, select
from .loss import parse_loss
from .solver import SolverConfig, fit_lasso


def _binary_dataset(est, X, y):
    X, y = check_X_y(X, y, dtype=np.float64)
    est.classes_ = unique_labels(y)
    if est.classes_.shape[0] != 2:
        raise ValueError(f"need exactly two classes, got {est.classes_.shape[0]}")
    yb = (y == est.classes_[1]).astype(np.float64)
    est.n_features_in_ = X.shape[1]
    return standardize(Dataset(X, yb))


class _LinearBinaryMixin:
    """Prediction helpers shared by the estimators below."""

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return self.intercept_ + X @ self.coef_

    def predict_proba(self, X):
        """Class probabilities; for non-logistic losses the linear score is clipped to [0, 1]."""
        s = self.decision_function(X)
        p1 = expit(s) if self.loss == "logistic" else np.clip(s, 0.0, 1.0)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        idx = (self.predict_proba(X)[:, 1] > 0.5).astype(int)
        return self.classes_[idx]


class LassoBinary(_LinearBinaryMixin, ClassifierMixin, BaseEstimator):
    """L1-penalized binary regression at a single penalty.

    Parameters
    ----------
    alpha : float
        Penalty lambda applied to the standardized coefficients.
    loss : {"logistic", "quadratic", "huber"}
    huber_delta : float
        Huber threshold; ignored for the other losses.
    max_iter, tol : int, float
        Solver iteration cap and KKT tolerance.
    """

    def __init__(self, alpha=0.05, loss="logistic", huber_delta=0.1, max_iter=10_000, tol=1e-6):
        self.alpha = alpha
        self.loss = loss
        self.huber_delta = huber_delta
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        d = _binary_dataset(self, X, y)
        spec = parse_loss(self.loss, self.huber_delta)
        fit = fit_lasso(d, spec, self.alpha, SolverConfig(max_iterations=self.max_iter, kkt_tol=self.tol))
        self.fit_ = fit
        self.intercept_, self.coef_ = destandardize_coefficients(d, fit.intercept, fit.coefficients)
        self.converged_ = fit.converged
        return self


class GICSelector(_LinearBinaryMixin, SelectorMixin, ClassifierMixin, BaseEstimator):
    """Lasso screening followed by GIC minimization over the screened family.

    After ``fit``, ``transform`` keeps the selected columns and the
    prediction methods use the unpenalized refit on them.

    Parameters
    ----------
    procedure : {"ss", "ssnet", "sscv", "lft"}
    penalty : str or None
        GIC penalty (``"bic"``, ``"ebic1"``, ``"ebic:0.5"``, ...). ``None``
        means EBIC with d = 1, or Fan-Tang for ``lft``.
    loss : {"logistic", "quadratic", "huber"}
    lam : float or None
        Screening penalty for ``procedure="ss"``.
    lambda_count, lambda_ratio : int, float
        Penalty grid for ``ssnet``, ``sscv`` and ``lft``.
    folds : int
        Number of CV folds for ``sscv``.
    random_state : int
        Seed of the fold assignment.

    Attributes
    ----------
    selected_ : tuple of int
        1-based indices of the selected columns.
    coef_ : ndarray of shape (n_features,)
        Refit coefficients on the original scale, zero off the selection.
    intercept_ : float
    gic_table_ : list of (tuple, float)
        GIC value of every family member (NaN where pruned).
    """

    def __init__(self, procedure="ssnet", penalty=None, loss="logistic", huber_delta=0.1, lam=None,
                 lambda_count=20, lambda_ratio=0.01, folds=10, random_state=0):
        self.procedure = procedure
        self.penalty = penalty
        self.loss = loss
        self.huber_delta = huber_delta
        self.lam = lam
        self.lambda_count = lambda_count
        self.lambda_ratio = lambda_ratio
        self.folds = folds
        self.random_state = random_state

    def fit(self, X, y):
        d = _binary_dataset(self, X, y)
        spec = parse_loss(self.loss, self.huber_delta)
        pen = parse_penalty(self.penalty) if self.penalty is not None else None
        out = select(d, spec, self.procedure, pen, lam=self.lam, m=self.lambda_count,
                     ratio=self.lambda_ratio, folds=self.folds, seed=self.random_state)
        self.outcome_ = out
        self.selected_ = tuple(out.selected)
        self.intercept_, self.coef_ = destandardize_coefficients(d, out.refit.intercept, out.refit.coefficients)
        self.gic_table_ = out.gic_table
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "selected_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[np.asarray(self.selected_, dtype=np.intp) - 1] = True
        return mask
