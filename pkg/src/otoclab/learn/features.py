"""Jensen-Shannon feature scores and top-K feature selection.

Each feature column is summarized per class by a fitted Gaussian, and the
score is the Jensen-Shannon divergence of the equal-weight mixture,

    JS = H(mixture) - mean_c H(N(mu_c, sigma_c)),

which for equally sized classes equals the mutual information between the
label and a feature distributed as the fitted mixture.  It is evaluated as
the mean of ``KL(N_c || mixture)`` by adaptive quadrature, each term over
its own class mean plus or minus eight standard deviations.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

__all__ = [
    "QUAD_TOL",
    "DegenerateFeatureWarning",
    "gaussian_js_divergence",
    "js_feature_score",
    "js_feature_scores",
    "JSFeatureSelector",
]

QUAD_TOL = 1e-8
_HALF_WIDTH = 8.0
_REL_FLOOR = 1e-9


class DegenerateFeatureWarning(UserWarning):
    """A class had (near) zero variance and the variance floor was used."""


def _js_batch(mu: np.ndarray, sd: np.ndarray) -> np.ndarray:
    """JS divergences for columns of ``mu``/``sd`` (shape ``(k, n)``).

    Uses ``JS = mean_c KL(p_c || m)``.  Each KL term is integrated in the
    standardized coordinate of its own class, ``x = mu_c + sd_c z`` with
    ``|z| <= 8``, so the integrand is smooth on unit scale even when one
    class is much narrower than the others.  All columns and classes share
    one vector-valued adaptive quadrature.
    """
    k = mu.shape[0]
    log_norm = -np.log(sd) - 0.5 * math.log(2 * math.pi)

    def integrand(z):
        # log m at the point z of every class: logsumexp over mixture components.
        # The offset is formed without x = mu + sd z, which loses z to
        # rounding when sd is tiny next to mu.
        dev = (mu[:, None, :] - mu[None, :, :] + sd[:, None, :] * z) / sd[None, :, :]
        log_m = logsumexp(log_norm[None] - 0.5 * dev**2, axis=1) - math.log(k)
        log_p = log_norm - 0.5 * z * z
        return (math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)) * (log_p - log_m)

    kl, _ = integrate.quad_vec(integrand, -_HALF_WIDTH, _HALF_WIDTH, epsabs=QUAD_TOL,
                               epsrel=QUAD_TOL, norm="max", limit=10_000)
    return np.clip(kl.mean(axis=0), 0.0, math.log(k))


def gaussian_js_divergence(means, stds) -> float:
    """JS divergence (natural log) of equally weighted 1D Gaussians.

    The result lies in ``[0, ln k]`` for ``k`` components.
    """
    mu = np.asarray(means, dtype=float)
    sd = np.asarray(stds, dtype=float)
    if mu.shape != sd.shape or mu.ndim != 1 or len(mu) < 2:
        raise ValueError("need matching 1D arrays of at least two means and stds")
    if np.any(sd <= 0):
        raise ValueError("standard deviations must be positive")
    return float(_js_batch(mu[:, None], sd[:, None])[0])


def _class_moments(X, labels):
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    means, stds = [], []
    for c in classes:
        vals = X[labels == c]
        if len(vals) < 2:
            raise ValueError("each class needs at least two samples")
        means.append(vals.mean(axis=0))
        stds.append(vals.std(axis=0, ddof=1))
    return np.array(means), np.array(stds)


def js_feature_scores(X, labels) -> tuple[np.ndarray, np.ndarray]:
    """Scores of all columns of ``X`` and a mask of columns that hit the variance floor.

    The floor is ``1e-9`` times the column's overall scale, so a
    zero-variance class does not produce an infinite density.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be two-dimensional")
    labels = np.asarray(labels)
    means, stds = _class_moments(X, labels)
    scale = np.maximum(np.maximum(X.std(axis=0), np.abs(X).max(axis=0)), 1e-3)
    floor = _REL_FLOOR * scale
    degenerate = np.any(stds < floor, axis=0)
    return _js_batch(means, np.maximum(stds, floor)), degenerate


def js_feature_score(column, labels) -> tuple[float, bool]:
    """Score of one feature column and whether the variance floor was used."""
    scores, flags = js_feature_scores(np.asarray(column, dtype=float)[:, None], labels)
    return float(scores[0]), bool(flags[0])


class JSFeatureSelector(SelectorMixin, BaseEstimator):
    """Keep the ``k`` columns with the largest Jensen-Shannon score.

    Ties are broken by column order.  ``k`` may be ``"all"``.  Because the
    ranking is stored, ``k`` can be changed with ``set_params`` after fitting
    without recomputing scores.

    Attributes
    ----------
    scores_ : ndarray
    degenerate_ : ndarray of bool
        Columns scored with the variance floor.
    ranking_ : ndarray
        Column indices by decreasing score.
    """

    def __init__(self, k="all"):
        self.k = k

    def fit(self, X, y):
        X, y = validate_data(self, X, y)
        self.scores_, self.degenerate_ = js_feature_scores(X, y)
        if self.degenerate_.any():
            warnings.warn(f"{int(self.degenerate_.sum())} feature(s) scored with the variance floor",
                          DegenerateFeatureWarning, stacklevel=2)
        self.ranking_ = np.argsort(-self.scores_, kind="stable")
        self._n_columns(X.shape[1])
        return self

    def _n_columns(self, n_features):
        if self.k == "all":
            return n_features
        k = int(self.k)
        if not 1 <= k <= n_features:
            raise ValueError(f"k must lie in [1, {n_features}], got {self.k}")
        return k

    def _get_support_mask(self):
        check_is_fitted(self, "ranking_")
        mask = np.zeros(len(self.scores_), dtype=bool)
        mask[self.ranking_[: self._n_columns(len(self.scores_))]] = True
        return mask
