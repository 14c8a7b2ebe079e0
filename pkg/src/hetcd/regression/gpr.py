"""Gaussian process regression with an isotropic RBF kernel.

Outputs share one kernel; the posterior mean is ``K_*X K_XX^-1 Y`` column by
column. The kernel is ``sf2 * (R + jitter * I)`` with
``R_ij = exp(-|x_i - x_j|^2 / (2 l^2))``, so the jitter is relative to the
signal variance.

The default starting length scale is the median pairwise distance of the
standardized training inputs. One ascent step on the noise-free marginal
likelihood only shortens ``l``, so a start that is already short leaves the
GP interpolating target noise between samples.
"""

import numpy as np
from scipy.linalg import cho_solve, cholesky
from sklearn.base import BaseEstimator, RegressorMixin

from .base import (
    DEFAULT_MAX_KERNEL_SAMPLES,
    check_kernel_budget,
    check_query,
    check_training_data,
    column_stats,
    iter_chunks,
    sq_distances,
)

MAX_JITTER = 1e-2
MEDIAN_SUBSAMPLE = 1000


class SingularKernelError(np.linalg.LinAlgError):
    pass


def _factor(d2, log_theta, jitter):
    """Cholesky factor of the kernel, escalating the jitter x10 on failure."""
    sf2, ell = np.exp(log_theta)
    corr = np.exp(-0.5 * d2 / ell ** 2)
    n = len(d2)
    while True:
        K = sf2 * (corr + jitter * np.eye(n))
        try:
            return cholesky(K, lower=True), K, corr, jitter
        except np.linalg.LinAlgError:
            if jitter >= MAX_JITTER:
                raise SingularKernelError(
                    "kernel matrix not positive definite even with jitter "
                    f"{jitter:g}"
                ) from None
            jitter = min(jitter * 10.0 if jitter > 0 else 1e-12, MAX_JITTER)


def log_marginal_likelihood(X, Y, log_theta, jitter=1e-6, eval_gradient=False):
    """Log evidence of the shared-kernel model, summed over output columns.

    ``log_theta = [log sf2, log l]``. With ``eval_gradient`` also returns the
    gradient with respect to ``log_theta``.
    """
    Y = Y if Y.ndim == 2 else Y[:, None]
    m, q = Y.shape
    d2 = sq_distances(X, X)
    L, K, corr, _ = _factor(d2, np.asarray(log_theta, dtype=np.float64), jitter)
    alpha = cho_solve((L, True), Y)
    lml = (
        -0.5 * np.sum(Y * alpha)
        - q * np.sum(np.log(np.diag(L)))
        - 0.5 * m * q * np.log(2 * np.pi)
    )
    if not eval_gradient:
        return lml
    sf2, ell = np.exp(log_theta)
    K_inv = cho_solve((L, True), np.eye(m))
    dK = (K, sf2 * corr * d2 / ell ** 2)
    grad = np.array(
        [0.5 * (np.sum(alpha * (D @ alpha)) - q * np.sum(K_inv * D)) for D in dK]
    )
    return lml, grad


def optimize_gpr_hyperparameters(X, Y, initial_theta, steps=1, jitter=1e-6,
                                 max_step=1.0, max_halvings=30):
    """Backtracking gradient ascent on the log marginal likelihood.

    ``initial_theta`` is ``(signal_variance, length_scale)``. Each step moves
    at most ``max_step`` in log-parameter space along the gradient and is
    halved until the likelihood does not decrease, so the result never has
    a lower likelihood than the start.
    """
    theta = np.log(np.asarray(initial_theta, dtype=np.float64))
    if steps <= 0:
        return tuple(np.exp(theta))
    lml, grad = log_marginal_likelihood(X, Y, theta, jitter, eval_gradient=True)
    for _ in range(steps):
        norm = np.linalg.norm(grad)
        if not np.isfinite(norm) or norm == 0:
            break
        step = grad * min(max_step / norm, 1.0)
        for _ in range(max_halvings):
            candidate = theta + step
            try:
                new_lml, new_grad = log_marginal_likelihood(
                    X, Y, candidate, jitter, eval_gradient=True
                )
            except SingularKernelError:
                new_lml = -np.inf
            if new_lml >= lml:
                theta, lml, grad = candidate, new_lml, new_grad
                break
            step = step / 2.0
        else:
            break
    return tuple(np.exp(theta))


def median_length_scale(X, max_points=MEDIAN_SUBSAMPLE):
    """Median pairwise distance of ``X``, on an evenly strided subsample."""
    X = np.asarray(X, dtype=np.float64)
    X = X[:: max(1, -(-len(X) // max_points))]
    if len(X) < 2:
        return 1.0
    d = np.sqrt(sq_distances(X, X)[np.triu_indices(len(X), 1)])
    med = float(np.median(d))
    return med if med > 0 else 1.0


class GPRegressor(RegressorMixin, BaseEstimator):
    """Multi-output GP regression on z-scored inputs and targets.

    Parameters
    ----------
    signal_variance : float
        Initial RBF signal variance, in standardized units.
    length_scale : float or "median"
        Initial RBF length scale in standardized units. ``"median"`` uses
        :func:`median_length_scale` of the training inputs.
    jitter : float
        Diagonal regularization relative to ``signal_variance``.
    optimizer_steps : int
        Gradient-ascent steps on the marginal likelihood before the final fit.
    max_samples : int
        Training sizes above this raise :class:`KernelMemoryError`.
    """

    def __init__(self, signal_variance=1.0, length_scale="median", jitter=1e-6,
                 optimizer_steps=1, max_samples=DEFAULT_MAX_KERNEL_SAMPLES,
                 standardize=True):
        self.signal_variance = signal_variance
        self.length_scale = length_scale
        self.jitter = jitter
        self.optimizer_steps = optimizer_steps
        self.max_samples = max_samples
        self.standardize = standardize

    def fit(self, X, y):
        X, Y = check_training_data(X, y)
        check_kernel_budget(len(X), self.max_samples)
        if isinstance(self.length_scale, str) and self.length_scale != "median":
            raise ValueError("length_scale must be a positive number or 'median'")
        if (self.signal_variance <= 0 or self.jitter < 0
                or (not isinstance(self.length_scale, str) and self.length_scale <= 0)):
            raise ValueError("GP hyperparameters must be positive")
        self.n_features_in_ = X.shape[1]
        self.x_mean_, self.x_scale_ = column_stats(X, self.standardize)
        self.y_mean_, self.y_scale_ = column_stats(Y, self.standardize)
        Xs = (X - self.x_mean_) / self.x_scale_
        Ys = (Y - self.y_mean_) / self.y_scale_
        ell0 = median_length_scale(Xs) if self.length_scale == "median" else self.length_scale

        sf2, ell = optimize_gpr_hyperparameters(
            Xs, Ys, (self.signal_variance, ell0),
            self.optimizer_steps, self.jitter,
        )
        L, _, _, used_jitter = _factor(sq_distances(Xs, Xs), np.log([sf2, ell]), self.jitter)
        self.signal_variance_ = float(sf2)
        self.length_scale_ = float(ell)
        self.jitter_ = float(used_jitter)
        self.X_train_ = Xs
        self.cholesky_ = L
        self.alpha_ = cho_solve((L, True), Ys)
        return self

    def predict(self, X, chunk_size=4096):
        X = check_query(self, X)
        Xs = (X - self.x_mean_) / self.x_scale_
        out = np.empty((len(X), self.alpha_.shape[1]))
        for sl in iter_chunks(len(X), chunk_size):
            k_star = self.signal_variance_ * np.exp(
                -0.5 * sq_distances(Xs[sl], self.X_train_) / self.length_scale_ ** 2
            )
            out[sl] = k_star @ self.alpha_
        return out * self.y_scale_ + self.y_mean_
