"""Shared plumbing for the cross-sensor regressors."""

import numpy as np
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

DEFAULT_MAX_KERNEL_SAMPLES = 20_000


class KernelMemoryError(MemoryError):
    """Raised when a dense M x M kernel matrix would not fit the budget."""


def check_kernel_budget(n_samples, max_samples):
    if n_samples > max_samples:
        raise KernelMemoryError(
            f"kernel matrix exceeds memory budget: M={n_samples} training "
            f"samples, cap is {max_samples}"
        )


def check_training_data(X, y):
    """Validate ``(M, P)`` inputs and ``(M, Q)`` targets; 1-D targets become a column."""
    X, y = check_X_y(X, y, multi_output=True, y_numeric=True, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    return X, y


def check_query(estimator, X):
    check_is_fitted(estimator)
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != estimator.n_features_in_:
        raise ValueError(
            f"X has {X.shape[1]} features, model was fitted with {estimator.n_features_in_}"
        )
    return X


def column_stats(a, standardize=True):
    """Per-column mean and scale; zero-variance columns get scale 1."""
    if not standardize:
        return np.zeros(a.shape[1]), np.ones(a.shape[1])
    mean = a.mean(axis=0)
    scale = a.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def sq_distances(A, B):
    """Squared Euclidean distances between rows, clipped at zero."""
    d2 = (
        np.einsum("ij,ij->i", A, A)[:, None]
        + np.einsum("ij,ij->i", B, B)[None, :]
        - 2.0 * A @ B.T
    )
    return np.maximum(d2, 0.0)


def iter_chunks(n, size):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))
