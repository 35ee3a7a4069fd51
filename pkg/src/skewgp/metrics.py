"""Forecast evaluation metrics."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def _check_pair(y_true, y_pred, min_n=1):
    yt = np.asarray(y_true, dtype=float).ravel()
    yp = np.asarray(y_pred, dtype=float).ravel()
    if yt.size != yp.size:
        raise DataError(f"length mismatch: {yt.size} true vs {yp.size} predicted")
    if yt.size < min_n:
        raise DataError(f"need at least {min_n} values, got {yt.size}")
    return yt, yp


def metric_mse(y_true, y_pred) -> float:
    yt, yp = _check_pair(y_true, y_pred)
    return float(np.mean((yt - yp) ** 2))


def metric_mae(y_true, y_pred) -> float:
    yt, yp = _check_pair(y_true, y_pred)
    return float(np.mean(np.abs(yt - yp)))


def metric_smse(y_true_test, y_pred) -> float:
    """Test MSE normalized by the population (1/n) variance of the test targets."""
    yt, yp = _check_pair(y_true_test, y_pred, min_n=2)
    var = float(np.mean((yt - np.mean(yt)) ** 2))
    if var <= 0.0:
        raise DataError("test targets have zero variance; SMSE is undefined")
    return float(np.sum((yt - yp) ** 2) / (yt.size * var))
