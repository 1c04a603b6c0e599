"""Input validation helpers shared by the estimators."""

import numpy as np


def check_finite(X, what="input"):
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{what} contains NaN or infinite values")
    return X


def check_grids(X):
    """Coerce to a (n_samples, n_freq, n_time) float array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim == 4 and X.shape[1] == 1:
        X = X[:, 0]
    if X.ndim != 3:
        raise ValueError(f"expected (n_samples, n_freq, n_time) grids, got shape {X.shape}")
    return check_finite(X, "spectrogram grids")


def check_features(X):
    """Coerce grids or vectors to a (n_samples, n_features) float matrix."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None]
    if X.ndim > 2:
        X = X.reshape(X.shape[0], -1)
    if X.shape[0] == 0:
        raise ValueError("no samples")
    return check_finite(X, "features")


def check_binary_targets(y, n_samples):
    """Return ``(classes, y01)``; exactly two distinct classes are required."""
    y = np.asarray(y).ravel()
    if y.shape[0] != n_samples:
        raise ValueError(f"{n_samples} samples but {y.shape[0]} targets")
    classes = np.unique(y)
    if classes.size != 2:
        raise ValueError(f"binary targets need exactly two classes, got {classes.size}")
    return classes, (y == classes[1]).astype(np.int64)


def check_n_features(estimator, X):
    if X.shape[1] != estimator.n_features_in_:
        raise ValueError(f"{type(estimator).__name__} expects {estimator.n_features_in_} "
                         f"features, got {X.shape[1]}")
