"""RBF-kernel support vector machines with an in-repo dual solver.

The dual problems of C-SVC and epsilon-SVR share the form

    min  1/2 a^T Q a + p^T a    s.t.  y^T a = 0,  0 <= a <= C,

with ``y`` in {+1, -1}.  :func:`solve_dual` solves it by sequential minimal
optimization: each step picks a maximal-violating pair with second-order
working-set selection and solves the two-variable subproblem in closed form.
Iteration stops once the KKT gap ``m(a) - M(a)`` drops below ``tol``.

The estimators follow the scikit-learn API so they compose with pipelines
and model-selection helpers.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

__all__ = [
    "DualSolution",
    "solve_dual",
    "rbf_kernel",
    "KernelSVC",
    "KernelSVR",
]

_TAU = 1e-12


@dataclass(frozen=True)
class DualSolution:
    """Result of :func:`solve_dual`.

    ``rho`` is the offset such that the decision value is
    ``sum_i y_i a_i K(x_i, x) - rho``.  ``gap`` is the final KKT violation.
    """

    alpha: np.ndarray
    rho: float
    gap: float
    n_iter: int
    converged: bool
    objective: float


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """``exp(-gamma |a_i - b_j|^2)``."""
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def solve_dual(Q: np.ndarray, p: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3,
               max_iter: int | None = None) -> DualSolution:
    """Solve the box- and equality-constrained dual QP by SMO.

    Parameters
    ----------
    Q : ndarray, shape (n, n)
        Signed kernel matrix ``y_i y_j K_ij`` (positive semidefinite).
    p : ndarray, shape (n,)
        Linear term.
    y : ndarray, shape (n,)
        Labels in {+1, -1} defining the equality constraint.
    C : float
        Upper bound of the box.
    tol : float
        Stopping tolerance on the maximal KKT violation.
    max_iter : int, optional
        Iteration cap; defaults to ``max(10**5, 100 n)``.
    """
    Q = np.asarray(Q, dtype=float)
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(p)
    if C <= 0:
        raise ValueError("C must be positive")
    if max_iter is None:
        max_iter = max(100_000, 100 * n)
    alpha = np.zeros(n)
    grad = p.copy()
    diag = np.diag(Q).copy()
    pos = y > 0
    neg = ~pos
    converged = False
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        at_lo = alpha <= 0
        at_hi = alpha >= C
        up = (pos & ~at_hi) | (neg & ~at_lo)
        low = (pos & ~at_lo) | (neg & ~at_hi)
        yg = -y * grad
        up_vals = np.where(up, yg, -np.inf)
        i = int(np.argmax(up_vals))
        m = up_vals[i]
        big_m = np.min(np.where(low, yg, np.inf))
        gap = m - big_m
        if gap < tol:
            converged = True
            break
        # second-order choice of j among the violating partners of i
        b = m - yg
        a = diag[i] + diag - 2.0 * y[i] * y * Q[i]
        a = np.where(a > 0, a, _TAU)
        score = np.where(low & (yg < m), -(b * b) / a, np.inf)
        j = int(np.argmin(score))
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(Q[i, i] + Q[j, j] + 2.0 * Q[i, j], _TAU)
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = max(Q[i, i] + Q[j, j] - 2.0 * Q[i, j], _TAU)
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        alpha[i], alpha[j] = ni, nj
        grad += Q[:, i] * (ni - ai) + Q[:, j] * (nj - aj)
    if not converged:
        warnings.warn(f"dual solver stopped after {max_iter} iterations with KKT gap {gap:.2e}",
                      ConvergenceWarning, stacklevel=2)
    np.clip(alpha, 0.0, C, out=alpha)
    rho = _offset(alpha, grad, y, C)
    objective = float(0.5 * alpha @ (grad + p)) if n else 0.0
    return DualSolution(alpha, rho, float(gap), it, converged, objective)


def _offset(alpha, grad, y, C):
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yg[free].mean())
    at_hi = alpha >= C
    # bounds from variables stuck at either end of the box
    upper = np.where((at_hi & (y < 0)) | (~at_hi & (y > 0)), yg, np.inf).min()
    lower = np.where((at_hi & (y > 0)) | (~at_hi & (y < 0)), yg, -np.inf).max()
    return float((upper + lower) / 2)


class _KernelBase(BaseEstimator):
    """Shared standardization and kernel plumbing."""

    def _standardize_fit(self, X):
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        self.scale_ = np.where(scale > 0, scale, 1.0)
        return (X - self.mean_) / self.scale_

    def _standardize(self, X):
        return (X - self.mean_) / self.scale_

    def _kernel(self, A, B):
        return rbf_kernel(A, B, self.gamma)

    def _check_params(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


class KernelSVC(ClassifierMixin, _KernelBase):
    """C-support vector classifier with an RBF kernel.

    Multi-class problems are handled one-vs-one; each sample receives one
    vote per pair and ties are broken by the summed decision margins.

    Parameters
    ----------
    C : float
        Box bound of the dual variables.
    gamma : float
        RBF width on standardized features.
    tol : float
        KKT tolerance of the dual solver.
    max_iter : int, optional
        Iteration cap of the dual solver.

    Attributes
    ----------
    classes_ : ndarray
    mean_, scale_ : ndarray
        Train-set standardization.
    support_vectors_ : ndarray
        Standardized support vectors (union over pairwise machines).
    machines_ : list of dict
        Per pair: class indices, support indices, signed dual coefficients and offset.
    """

    def __init__(self, C: float = 1.0, gamma: float = 1.0, tol: float = 1e-3,
                 max_iter: int | None = None):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        self._check_params()
        X, y = validate_data(self, X, y)
        check_classification_targets(y)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need samples from at least two classes")
        Z = self._standardize_fit(X)
        K = self._kernel(Z, Z)
        machines = []
        used = np.zeros(len(Z), dtype=bool)
        for a, b in combinations(range(len(self.classes_)), 2):
            idx = np.flatnonzero((codes == a) | (codes == b))
            # class a is the positive side
            s = np.where(codes[idx] == a, 1.0, -1.0)
            Q = s[:, None] * s[None, :] * K[np.ix_(idx, idx)]
            sol = solve_dual(Q, -np.ones(len(idx)), s, self.C, self.tol, self.max_iter)
            sv = sol.alpha > 0
            machines.append({"pair": (a, b), "support": idx[sv], "coef": (sol.alpha * s)[sv],
                             "rho": sol.rho, "gap": sol.gap, "converged": sol.converged,
                             "n_iter": sol.n_iter})
            used[idx[sv]] = True
        self.machines_ = machines
        self.support_ = np.flatnonzero(used)
        self.support_vectors_ = Z[self.support_]
        return self

    def _pair_decisions(self, X):
        check_is_fitted(self, "machines_")
        X = validate_data(self, X, reset=False)
        Z = self._standardize(X)
        K = self._kernel(Z, self.support_vectors_)
        col = {s: k for k, s in enumerate(self.support_)}
        out = np.empty((len(Z), len(self.machines_)))
        for m, mach in enumerate(self.machines_):
            cols = [col[s] for s in mach["support"]]
            out[:, m] = K[:, cols] @ mach["coef"] - mach["rho"]
        return out

    def decision_function(self, X):
        """Signed margin for binary problems; per-class vote-plus-margin scores otherwise."""
        dec = self._pair_decisions(X)
        if len(self.classes_) == 2:
            # positive values favour classes_[1]
            return -dec[:, 0]
        return self._votes(dec)

    def _votes(self, dec):
        n_cls = len(self.classes_)
        votes = np.zeros((len(dec), n_cls))
        margin = np.zeros((len(dec), n_cls))
        for m, mach in enumerate(self.machines_):
            a, b = mach["pair"]
            win_a = dec[:, m] > 0
            votes[:, a] += win_a
            votes[:, b] += ~win_a
            margin[:, a] += dec[:, m]
            margin[:, b] -= dec[:, m]
        # margins only break ties: they are squashed below one vote
        return votes + margin / (1.0 + np.abs(margin)) / (2.0 * n_cls)

    def predict(self, X):
        dec = self._pair_decisions(X)
        if len(self.classes_) == 2:
            return self.classes_[np.where(dec[:, 0] > 0, 0, 1)]
        return self.classes_[np.argmax(self._votes(dec), axis=1)]

    def kkt_gap(self) -> float:
        """Largest final KKT violation over the pairwise machines."""
        check_is_fitted(self, "machines_")
        return max(m["gap"] for m in self.machines_)


class KernelSVR(RegressorMixin, _KernelBase):
    """Epsilon-support vector regressor with an RBF kernel.

    Parameters
    ----------
    C : float
    gamma : float
    epsilon : float
        Half-width of the insensitive tube.  Targets are used as given (not
        standardized), so ``epsilon`` is in target units.
    tol, max_iter
        Dual-solver controls.
    """

    def __init__(self, C: float = 1.0, gamma: float = 1.0, epsilon: float = 0.1,
                 tol: float = 1e-3, max_iter: int | None = None):
        self.C = C
        self.gamma = gamma
        self.epsilon = epsilon
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        self._check_params()
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        X, y = validate_data(self, X, y, y_numeric=True)
        y = y.astype(float)
        if len(y) < 2:
            raise ValueError("need at least two samples")
        Z = self._standardize_fit(X)
        K = self._kernel(Z, Z)
        n = len(y)
        s = np.concatenate([np.ones(n), -np.ones(n)])
        K2 = np.block([[K, K], [K, K]])
        Q = s[:, None] * s[None, :] * K2
        p = np.concatenate([self.epsilon - y, self.epsilon + y])
        sol = solve_dual(Q, p, s, self.C, self.tol, self.max_iter)
        coef = sol.alpha[:n] - sol.alpha[n:]
        sv = np.abs(coef) > 0
        self.support_ = np.flatnonzero(sv)
        self.support_vectors_ = Z[sv]
        self.dual_coef_ = coef[sv]
        self.intercept_ = -sol.rho
        self.kkt_gap_ = sol.gap
        self.converged_ = sol.converged
        self.n_iter_ = sol.n_iter
        return self

    def predict(self, X):
        check_is_fitted(self, "dual_coef_")
        X = validate_data(self, X, reset=False)
        Z = self._standardize(X)
        if len(self.dual_coef_) == 0:
            return np.full(len(Z), self.intercept_)
        return self._kernel(Z, self.support_vectors_) @ self.dual_coef_ + self.intercept_
