"""Multiple-input multiple-output support vector regression.

The cost over all outputs at once is::

    0.5 * sum_q beta_q' K beta_q + penalty * sum_m L(|e_m|)

with the hyperspherical epsilon-insensitive loss ``L(u) = (u - eps)^2`` for
``u >= eps`` and 0 otherwise, where ``e_m`` is the residual vector of sample
``m``. ``W = Phi' beta`` is kept in its kernel expansion, so predictions are
``K(x, X) beta + b``. The solver is iteratively reweighted least squares:
each iteration solves the weighted problem on the current support set and
line-searches toward that solution, accepting only steps that do not raise
the cost.
"""

import warnings

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import ConvergenceWarning

from .base import (
    DEFAULT_MAX_KERNEL_SAMPLES,
    check_kernel_budget,
    check_query,
    check_training_data,
    column_stats,
    iter_chunks,
    sq_distances,
)


def rbf_kernel(A, B, sigma):
    return np.exp(-sq_distances(A, B) / (2.0 * sigma ** 2))


def insensitive_loss(u, epsilon):
    return np.where(u < epsilon, 0.0, (u - epsilon) ** 2)


def svr_cost(beta, b, K, Y, penalty, epsilon):
    """Objective value for dual coefficients ``beta`` (M, Q) and bias ``b`` (Q,)."""
    resid = Y - K @ beta - b
    u = np.sqrt(np.sum(resid ** 2, axis=1))
    return 0.5 * np.sum(beta * (K @ beta)) + penalty * np.sum(insensitive_loss(u, epsilon))


def _residual_norms(beta, b, K, Y):
    return np.sqrt(np.sum((Y - K @ beta - b) ** 2, axis=1))


def fit_svr(K, Y, penalty=1.0, epsilon=0.1, max_iter=100, tol=1e-6,
            min_step=1e-10):
    """Minimize the MIMO-SVR cost for a precomputed kernel matrix.

    Returns
    -------
    beta : ndarray (M, Q)
    b : ndarray (Q,)
    costs : list of float
        Cost after initialization and after every accepted iteration;
        non-increasing.
    converged : bool
    """
    m, q = Y.shape
    beta = np.zeros((m, q))
    b = Y.mean(axis=0)
    cost = svr_cost(beta, b, K, Y, penalty, epsilon)
    costs = [cost]
    converged = False
    for _ in range(max_iter):
        u = _residual_norms(beta, b, K, Y)
        sv = u >= epsilon
        if not np.any(sv):
            # every residual is inside the tube: only the norm term remains,
            # minimized at beta = 0 with the current bias inside the tube
            if np.any(beta != 0):
                trial = np.zeros_like(beta)
                if svr_cost(trial, b, K, Y, penalty, epsilon) <= cost:
                    beta = trial
                    cost = svr_cost(beta, b, K, Y, penalty, epsilon)
                    costs.append(cost)
            converged = True
            break
        a = 2.0 * penalty * (u[sv] - epsilon) / u[sv]
        n_sv = int(sv.sum())
        Kss = K[np.ix_(sv, sv)]
        A = np.empty((n_sv + 1, n_sv + 1))
        A[:n_sv, :n_sv] = Kss + np.diag(1.0 / a)
        A[:n_sv, n_sv] = 1.0
        A[n_sv, :n_sv] = a @ Kss
        A[n_sv, n_sv] = a.sum()
        rhs = np.vstack([Y[sv], a @ Y[sv]])
        A[np.diag_indices_from(A)] += 1e-11
        try:
            sol = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
        target_beta = np.zeros_like(beta)
        target_beta[sv] = sol[:n_sv]
        target_b = sol[n_sv]

        step = 1.0
        while step >= min_step:
            cand_beta = beta + step * (target_beta - beta)
            cand_b = b + step * (target_b - b)
            cand_cost = svr_cost(cand_beta, cand_b, K, Y, penalty, epsilon)
            if cand_cost <= cost:
                break
            step /= 10.0
        else:
            converged = True
            break
        beta, b = cand_beta, cand_b
        previous, cost = cost, cand_cost
        costs.append(cost)
        if previous - cost <= tol * max(previous, np.finfo(float).tiny):
            converged = True
            break
    return beta, b, costs, converged


class MSVR(RegressorMixin, BaseEstimator):
    """Multi-output SVR with an RBF kernel of width ``sigma``.

    Inputs and targets are z-scored per column before fitting, so ``sigma``
    and ``epsilon`` are in standardized units.

    Attributes
    ----------
    support_ : ndarray of int
        Training samples whose residual norm is at least ``epsilon``.
    cost_history_ : list of float
    converged_ : bool
    """

    def __init__(self, penalty=1.0, epsilon=0.1, sigma=1.0, max_iter=100,
                 tol=1e-6, max_samples=DEFAULT_MAX_KERNEL_SAMPLES,
                 standardize=True):
        self.penalty = penalty
        self.epsilon = epsilon
        self.sigma = sigma
        self.max_iter = max_iter
        self.tol = tol
        self.max_samples = max_samples
        self.standardize = standardize

    def fit(self, X, y):
        X, Y = check_training_data(X, y)
        check_kernel_budget(len(X), self.max_samples)
        if self.penalty <= 0 or self.epsilon <= 0 or self.sigma <= 0:
            raise ValueError("penalty, epsilon and sigma must be positive")
        self.n_features_in_ = X.shape[1]
        self.x_mean_, self.x_scale_ = column_stats(X, self.standardize)
        self.y_mean_, self.y_scale_ = column_stats(Y, self.standardize)
        Xs = (X - self.x_mean_) / self.x_scale_
        Ys = (Y - self.y_mean_) / self.y_scale_

        K = rbf_kernel(Xs, Xs, self.sigma)
        beta, b, costs, converged = fit_svr(
            K, Ys, self.penalty, self.epsilon, self.max_iter, self.tol
        )
        if not converged:
            warnings.warn(
                f"MSVR did not converge in {self.max_iter} iterations",
                ConvergenceWarning,
            )
        u = _residual_norms(beta, b, K, Ys)
        self.support_ = np.flatnonzero(u >= self.epsilon)
        keep = np.any(beta != 0, axis=1)
        self.X_train_ = Xs[keep]
        self.dual_coef_ = beta[keep]
        self.intercept_ = b
        self.cost_history_ = [float(c) for c in costs]
        self.converged_ = bool(converged)
        return self

    def predict(self, X, chunk_size=4096):
        X = check_query(self, X)
        Xs = (X - self.x_mean_) / self.x_scale_
        out = np.empty((len(X), len(self.intercept_)))
        for sl in iter_chunks(len(X), chunk_size):
            if len(self.X_train_):
                out[sl] = rbf_kernel(Xs[sl], self.X_train_, self.sigma) @ self.dual_coef_
            else:
                out[sl] = 0.0
            out[sl] += self.intercept_
        return out * self.y_scale_ + self.y_mean_
