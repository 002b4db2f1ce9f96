"""Augmented Dickey-Fuller statistic (constant, no trend) by ordinary least squares."""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import SeriesTooShort, SingularRegression

logger = logging.getLogger(__name__)

MIN_LENGTH = 20

# Asymptotic critical values for the constant-only regression
CRITICAL_VALUES = ((-3.43, "<0.01"), (-2.86, "<0.05"), (-2.57, "<0.10"))
NOT_SIGNIFICANT = ">=0.10"


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lag_order: int
    p_bucket: str
    n_obs: int

    @property
    def stationary_at_5pct(self) -> bool:
        return self.p_bucket in ("<0.01", "<0.05")


def schwert_lag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def p_bucket(statistic: float) -> str:
    for critical, bucket in CRITICAL_VALUES:
        if statistic < critical:
            return bucket
    return NOT_SIGNIFICANT


def adf_design(series: np.ndarray, lag: int) -> Tuple[np.ndarray, np.ndarray]:
    """Regressors ``[1, x_{t-1}, dx_{t-1} .. dx_{t-p}]`` and response ``dx_t``."""
    x = np.asarray(series, dtype=np.float64)
    diff = np.diff(x)
    rows = np.arange(lag, diff.shape[0])
    columns = [np.ones(rows.shape[0]), x[rows]]
    columns += [diff[rows - i] for i in range(1, lag + 1)]
    return np.column_stack(columns), diff[rows]


def ols(design: np.ndarray, response: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Least-squares coefficients, their covariance and the residuals.

    Raises:
        SingularRegression: If the design matrix is rank deficient
    """
    n, k = design.shape
    if n <= k:
        raise SeriesTooShort(f"{n} observations cannot fit {k} regressors")
    beta, _, rank, _ = np.linalg.lstsq(design, response, rcond=None)
    if rank < k:
        raise SingularRegression(f"design matrix has rank {rank} < {k} regressors")
    residuals = response - design @ beta
    sigma2 = float(residuals @ residuals) / (n - k)
    try:
        covariance = sigma2 * np.linalg.inv(design.T @ design)
    except np.linalg.LinAlgError as e:
        raise SingularRegression(str(e)) from e
    return beta, covariance, residuals


def adf_statistic(series: np.ndarray, max_lag: Optional[int] = None) -> AdfResult:
    """t-ratio of the lagged level in the ADF regression.

    Args:
        series: At least 20 observations
        max_lag: Number of lagged differences; Schwert's rule when omitted

    Returns:
        AdfResult with the statistic and its significance bucket
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    n = x.shape[0]
    if n < MIN_LENGTH:
        raise SeriesTooShort(f"ADF needs at least {MIN_LENGTH} observations, got {n}")
    if not np.all(np.isfinite(x)):
        raise SingularRegression("series contains NaN or Inf")
    if max_lag is None:
        lag = min(schwert_lag(n), n // 2 - 2)
    else:
        lag = int(max_lag)
        if lag < 0:
            raise ValueError(f"max_lag must be >= 0, got {max_lag}")

    design, response = adf_design(x, lag)
    beta, covariance, _ = ols(design, response)
    se = math.sqrt(covariance[1, 1])
    if se == 0.0:
        raise SingularRegression("zero standard error on the lagged level")
    statistic = float(beta[1] / se)
    result = AdfResult(
        statistic=statistic, lag_order=lag, p_bucket=p_bucket(statistic),
        n_obs=int(response.shape[0]),
    )
    logger.debug(f"ADF statistic {statistic:.4f} (lag {lag}, bucket {result.p_bucket})")
    return result
