"""Gaussian-process baselines with a daily*weekly periodic kernel.

The covariance is

    k(x, y) = k_per_daily(x, y) * k_per_weekly(x, y) + k_rbf(x, y) + k_white(x, y)

with the two periodic components fixed at 24h and 168h. Counts are treated as
continuous, standardized internally, and hyperparameters are chosen by
maximizing the log marginal likelihood with a bounded quasi-Newton search on
log-parameters; the best evaluated point is always kept, so the fit is never
worse than its initialization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .errors import InputError
from .series import ForecastSeries, SensorSeries

logger = logging.getLogger(__name__)

DAILY_PERIOD = 24.0
WEEKLY_PERIOD = 168.0

_LOG_BOUNDS = (-30.0, 8.0)
_JITTERS = (0.0, 1e-12, 1e-10, 1e-8, 1e-7, 1e-6)


@dataclass(frozen=True)
class GpParams:
    """Kernel hyperparameters; the periodic periods are fixed elsewhere."""

    daily_variance: float = 1.0
    daily_lengthscale: float = 1.0
    weekly_variance: float = 1.0
    weekly_lengthscale: float = 1.0
    rbf_variance: float = 0.5
    rbf_lengthscale: float = 48.0
    white_variance: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")

    def to_vector(self) -> np.ndarray:
        return np.log([getattr(self, f.name) for f in fields(self)])

    @classmethod
    def from_vector(cls, theta: np.ndarray) -> "GpParams":
        names = [f.name for f in fields(cls)]
        return cls(**dict(zip(names, np.exp(theta))))


@dataclass(frozen=True)
class GpConfig:
    """Fit configuration: initial kernel values and optimizer budget."""

    initial: GpParams = GpParams()
    restarts: int = 3
    max_iter: int = 100
    max_jitter: float = 1e-6
    optimize: bool = True
    restart_seed: int = 0

    def __post_init__(self):
        if self.max_jitter <= 0:
            raise ValueError("max_jitter must be positive")


def kernel_matrix(x, y, params: GpParams) -> np.ndarray:
    """Cross-covariance (daily*weekly periodic + RBF, no white term)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = np.abs(x[:, None] - y[None, :])
    daily = params.daily_variance * np.exp(
        -2.0 * np.sin(np.pi * d / DAILY_PERIOD) ** 2 / params.daily_lengthscale**2
    )
    weekly = params.weekly_variance * np.exp(
        -2.0 * np.sin(np.pi * d / WEEKLY_PERIOD) ** 2 / params.weekly_lengthscale**2
    )
    rbf = params.rbf_variance * np.exp(-0.5 * d**2 / params.rbf_lengthscale**2)
    return daily * weekly + rbf


def gram_matrix(x, params: GpParams) -> np.ndarray:
    """Training covariance, including the white-noise diagonal."""
    K = kernel_matrix(x, x, params)
    K[np.diag_indices_from(K)] += params.white_variance
    return K


def kernel_diag_value(params: GpParams, include_white: bool = True) -> float:
    """k(x, x): the product of the periodic variances plus RBF (plus white)."""
    value = params.daily_variance * params.weekly_variance + params.rbf_variance
    return value + params.white_variance if include_white else value


def _chol_with_jitter(K: np.ndarray, max_jitter: float):
    for jitter in _JITTERS:
        if jitter > max_jitter:
            break
        try:
            L = cholesky(K + jitter * np.eye(K.shape[0]), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            continue
    return None, None


def log_marginal_likelihood(x, y, params: GpParams, max_jitter: float = 1e-6) -> float:
    """LML of standardized targets; -inf when factorization fails."""
    K = gram_matrix(x, params)
    L, _ = _chol_with_jitter(K, max_jitter)
    if L is None:
        return -np.inf
    alpha = cho_solve((L, True), y)
    return float(
        -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(y) * np.log(2.0 * np.pi)
    )


@dataclass
class GpState:
    """Fitted GP: training inputs, factorization and scaling."""

    sensor_id: str
    x_origin: int
    x_train: np.ndarray
    y_mean: float
    y_std: float
    params: GpParams
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float
    lml: float
    lml_init: float
    train_end: int


def fit_gp(train: SensorSeries, config: GpConfig = GpConfig()) -> GpState:
    """Maximize the LML from the configured initialization with restarts.

    The periodic periods stay fixed; only variances and lengthscales (and the
    white-noise level) are optimized. On optimizer failure the best point
    evaluated so far is returned.
    """
    if len(train) < 2:
        raise InputError("GP fit needs at least 2 training points")
    if len(train) < int(WEEKLY_PERIOD):
        logger.info("fit_gp: sensor %s has under one week of training data; "
                    "the weekly component may not be identifiable", train.sensor_id)
    x = (train.timestamps - train.timestamps[0]).astype(np.float64)
    y_raw = train.counts.astype(np.float64)
    y_mean = float(y_raw.mean())
    y_std = float(y_raw.std())
    if y_std < 1e-12:
        y_std = 1.0
    y = (y_raw - y_mean) / y_std

    best = {"theta": config.initial.to_vector(), "lml": -np.inf}

    def negative_lml(theta: np.ndarray) -> float:
        lml = log_marginal_likelihood(x, y, GpParams.from_vector(theta), config.max_jitter)
        if lml > best["lml"]:
            best["lml"] = lml
            best["theta"] = np.asarray(theta, dtype=np.float64).copy()
        return -lml if np.isfinite(lml) else 1e12

    theta0 = config.initial.to_vector()
    lml_init = -negative_lml(theta0)
    if config.optimize:
        bounds = [(_LOG_BOUNDS[0], _LOG_BOUNDS[1])] * theta0.size
        starts = [theta0]
        rng = np.random.default_rng(config.restart_seed)
        for _ in range(config.restarts):
            starts.append(np.clip(theta0 + rng.normal(0.0, 1.0, theta0.size), *_LOG_BOUNDS))
        for start in starts:
            try:
                minimize(
                    negative_lml,
                    start,
                    method="L-BFGS-B",
                    bounds=bounds,
                    options={"maxiter": config.max_iter},
                )
            except Exception:  # pragma: no cover - scipy internal failures
                logger.warning("fit_gp: optimizer run failed; keeping best point so far")

    params = GpParams.from_vector(best["theta"])
    K = gram_matrix(x, params)
    L, jitter = _chol_with_jitter(K, config.max_jitter)
    if L is None:
        raise InputError(
            f"GP Gram matrix for sensor {train.sensor_id} is ill-conditioned: "
            f"factorization failed even with jitter {config.max_jitter}"
        )
    alpha = cho_solve((L, True), y)
    return GpState(
        sensor_id=train.sensor_id,
        x_origin=int(train.timestamps[0]),
        x_train=x,
        y_mean=y_mean,
        y_std=y_std,
        params=params,
        chol=L,
        alpha=alpha,
        jitter=jitter,
        lml=best["lml"],
        lml_init=lml_init,
        train_end=int(train.timestamps[-1]),
    )


def predict(state: GpState, hours: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and predictive std (of observations), de-standardized."""
    xs = (np.asarray(hours, dtype=np.int64) - state.x_origin).astype(np.float64)
    Ks = kernel_matrix(xs, state.x_train, state.params)
    mean_s = Ks @ state.alpha
    v = solve_triangular(state.chol, Ks.T, lower=True)
    var_s = (
        kernel_diag_value(state.params, include_white=True)
        - np.einsum("ij,ij->j", v, v)
    )
    var_s = np.maximum(var_s, 0.0)
    return state.y_mean + state.y_std * mean_s, state.y_std * np.sqrt(var_s)


def forecast_gp(state: GpState, horizon_hours: int, sigma_k: float = 3.0) -> ForecastSeries:
    """Posterior baselines with k-sigma bounds for the hours after training."""
    if horizon_hours < 1:
        raise ValueError("horizon must be >= 1 hour")
    future = np.arange(state.train_end + 1, state.train_end + 1 + horizon_hours)
    mean, std = predict(state, future)
    return ForecastSeries.from_moments(state.sensor_id, future, mean, std, sigma_k)
