"""Grid-search cross-validation for the kernel models.

Feature selection is refit inside every training fold, so the held-out fold
never influences which columns are kept.  Selection scores are computed once
per fold and reused for every ``k``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import clone
from sklearn.model_selection import KFold, StratifiedKFold
from sklearn.pipeline import Pipeline

from .features import JSFeatureSelector
from .svm import KernelSVC, KernelSVR

__all__ = [
    "K_GRID",
    "PROBE_GRID",
    "LINK_GRID",
    "GEOMETRY_GRID",
    "CVResult",
    "make_folds",
    "feature_counts",
    "cross_validate",
    "build_model",
]

K_GRID = (8, 32, 128, "all")
PROBE_GRID = {"C": (10.0, 30.0, 100.0), "gamma": (0.03, 0.06, 0.1, 0.3, 1.0, 3.0, 6.0, 10.0)}
LINK_GRID = {"C": (0.1, 1.0, 10.0, 100.0, 1000.0), "gamma": (0.1, 0.3, 1.0, 3.0, 10.0, 30.0),
             "k": K_GRID}
GEOMETRY_GRID = {"C": (0.1, 1.0, 10.0), "gamma": (0.3, 3.0, 30.0)}


@dataclass
class CVResult:
    """Outcome of :func:`cross_validate`.

    ``scores`` maps each grid point ``(C, gamma, k)`` to its mean validation
    score (accuracy for classifiers, negative mean absolute error for
    regressors).
    """

    best_params: dict
    best_score: float
    scores: dict = field(default_factory=dict)
    n_folds: int = 5


def make_folds(y, n_folds: int, seed: int, classify: bool) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled (stratified for classifiers) k-fold ``(train, validation)`` index pairs."""
    y = np.asarray(y)
    splitter = (StratifiedKFold if classify else KFold)(n_folds, shuffle=True,
                                                        random_state=int(seed) % 2**32)
    return list(splitter.split(np.zeros(len(y)), y))


def feature_counts(k_grid: Sequence, n_features: int) -> list:
    """Entries of ``k_grid`` usable with ``n_features`` columns.

    Integer counts at or above the column count duplicate ``"all"`` and are
    dropped.
    """
    out = [k for k in k_grid if k != "all" and 1 <= int(k) < n_features]
    if "all" in k_grid or not out:
        out.append("all")
    return out


def _sort_key(params):
    k = params["k"]
    return (params["C"], params["gamma"], math.inf if k == "all" else k)


def build_model(kind: str, params: Mapping, epsilon: float = 0.1, tol: float = 1e-3):
    """Pipeline of optional JS selection (classifiers only) and the kernel model."""
    if kind == "classifier":
        model = KernelSVC(C=params["C"], gamma=params["gamma"], tol=tol)
        return Pipeline([("select", JSFeatureSelector(params.get("k", "all"))), ("svm", model)])
    if kind == "regressor":
        if params.get("k", "all") != "all":
            raise ValueError("feature selection is only defined for class labels")
        return Pipeline([("svm", KernelSVR(C=params["C"], gamma=params["gamma"], epsilon=epsilon,
                                           tol=tol))])
    raise ValueError("kind must be 'classifier' or 'regressor'")


def _score(kind, y_true, y_pred):
    if kind == "classifier":
        return float(np.mean(y_true == y_pred))
    return -float(np.mean(np.abs(y_true - y_pred)))


def cross_validate(X, y, grid: Mapping[str, Sequence], kind: str = "classifier",
                   n_folds: int = 5, seed: int = 0, epsilon: float = 0.1) -> CVResult:
    """Mean k-fold validation score over the grid; returns the best point.

    ``grid`` holds ``C`` and ``gamma`` sequences and optionally ``k``
    (feature counts, see :data:`K_GRID`).  Ties go to the lexicographically
    smallest ``(C, gamma)``, then the smallest ``k``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    cs = list(grid.get("C", ()))
    gammas = list(grid.get("gamma", ()))
    if not cs or not gammas:
        raise ValueError("grid needs at least one C and one gamma")
    ks = feature_counts(grid.get("k", ("all",)), X.shape[1])
    classify = kind == "classifier"
    folds = make_folds(y, n_folds, seed, classify)
    totals = {(c, g, k): 0.0 for c, g, k in itertools.product(cs, gammas, ks)}
    for train, val in folds:
        selector = None
        if classify and ks != ["all"]:
            selector = JSFeatureSelector().fit(X[train], y[train])
        for k in ks:
            cols = slice(None) if k == "all" else np.sort(selector.ranking_[: int(k)])
            xt, xv = X[train][:, cols], X[val][:, cols]
            for c, g in itertools.product(cs, gammas):
                params = {"C": c, "gamma": g, "k": "all"}
                model = clone(build_model(kind, params, epsilon)[-1])
                model.fit(xt, y[train])
                totals[(c, g, k)] += _score(kind, y[val], model.predict(xv))
    scores = {key: v / len(folds) for key, v in totals.items()}
    best_key = min(scores, key=lambda key: (-round(scores[key], 12),
                                            _sort_key(dict(zip(("C", "gamma", "k"), key)))))
    best = dict(zip(("C", "gamma", "k"), best_key))
    return CVResult(best, scores[best_key], scores, n_folds)
