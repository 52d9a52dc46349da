"""Gaussian fit of surrogate features, squared Mahalanobis distance, and the penalized cost."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from offline_tsp.errors import InvalidArgumentError, NumericalFailure


@dataclass(frozen=True, eq=False)
class GaussianStats:
    mu: np.ndarray
    sigma_inv: np.ndarray
    ridge: float
    n: int

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class CostParams:
    alpha: float
    lam: float = 1e6
    alpha_quantile: float = 0.95

    def __post_init__(self):
        if not (self.alpha >= 0 and self.lam >= 0 and 0 <= self.alpha_quantile <= 1):
            raise InvalidArgumentError(
                f"need alpha >= 0, lambda >= 0, quantile in [0, 1]; got {self}"
            )


def fit_gaussian(features, ridge_scale: float = 1e-6) -> GaussianStats:
    """Mean and ridge-regularized inverse of the (1/N) covariance.

    The ridge is ``ridge_scale * trace(cov) / d``; when the covariance is
    exactly zero it falls back to ``ridge_scale`` itself.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise InvalidArgumentError("need at least 2 feature vectors")
    n, d = x.shape
    # a summed mean of identical rows can be off by an ulp, which the tiny ridge would amplify
    mu = x[0].copy() if np.all(x == x[0]) else x.mean(axis=0)
    centered = x - mu
    cov = centered.T @ centered / n
    trace = float(np.trace(cov))
    ridge = ridge_scale * trace / d if trace > 0 else ridge_scale
    reg = cov + ridge * np.eye(d)
    try:
        np.linalg.cholesky(reg)
        sigma_inv = np.linalg.inv(reg)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"covariance inversion failed: {exc}") from None
    sigma_inv = 0.5 * (sigma_inv + sigma_inv.T)
    if not np.all(np.isfinite(sigma_inv)):
        raise NumericalFailure("inverse covariance is not finite")
    return GaussianStats(mu, sigma_inv, ridge, n)


def mahalanobis(stats: GaussianStats, feature) -> float:
    """Squared distance ``(f - mu)^T Sigma^-1 (f - mu)``; no square root is taken."""
    f = np.asarray(feature, dtype=np.float64)
    if f.shape != stats.mu.shape:
        raise InvalidArgumentError(f"feature shape {f.shape} != {stats.mu.shape}")
    diff = f - stats.mu
    return max(float(diff @ stats.sigma_inv @ diff), 0.0)


def mahalanobis_batch(stats: GaussianStats, features) -> np.ndarray:
    """Row-wise :func:`mahalanobis`, bit-identical to calling it on each row."""
    x = np.asarray(features, dtype=np.float64).reshape(-1, stats.dim)
    return np.array([mahalanobis(stats, f) for f in x])


def nearest_rank(values, quantile: float) -> float:
    """Nearest-rank quantile with the ceiling convention (q=0 gives the minimum)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise InvalidArgumentError("need at least one value")
    if not 0 <= quantile <= 1:
        raise InvalidArgumentError("quantile must be in [0, 1]")
    # round away float noise such as 0.95 * 1000 = 950.0000000000001
    rank = math.ceil(round(quantile * v.size, 9))
    return float(v[max(rank, 1) - 1])


def calibrate_alpha(stats: GaussianStats, features, quantile: float = 0.95) -> float:
    feats = np.asarray(features, dtype=np.float64)
    if feats.size == 0:
        raise InvalidArgumentError("need at least one training feature")
    return nearest_rank(mahalanobis_batch(stats, feats), quantile)


def regularized_cost(score: float, md: float, params: CostParams) -> float:
    """``-score + lambda * max(0, md - alpha)``."""
    return -score + params.lam * max(0.0, md - params.alpha)
