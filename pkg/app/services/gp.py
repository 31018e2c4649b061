"""
Ordinary Kriging with a constant mean, fitted by concentrated maximum likelihood.

The nugget-augmented correlation matrix is factorized once per fit; the
uncertainty estimate is optionally re-interpolated so that it vanishes at
the training points despite the nugget.
"""

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from app.core.exceptions import InputException, ModelFitException
from app.core.logging import get_logger
from app.models.schemas import FitConfig, KernelKind, SearchSpace
from app.services.kernels import (
    CorrelationMatrix,
    KernelParams,
    cross_kernel,
    kernel_matrix,
    param_bounds,
    params_from_unit,
)
from app.services.optim import BoxProblem, direct_minimize

logger = get_logger("gp")

# Returned for constant observations, where the process variance vanishes.
DEGENERATE_LIKELIHOOD = 1e10


@dataclass(frozen=True)
class KrigingModel:
    """A fitted Kriging model. Immutable, safe for concurrent prediction."""
    space: SearchSpace
    X: np.ndarray
    y: np.ndarray
    kind: KernelKind
    params: KernelParams
    config: FitConfig
    correlation: CorrelationMatrix
    factor: Tuple[np.ndarray, bool]
    mu_hat: float
    sigma2_hat: float
    sigma2_ri: float
    alpha: np.ndarray
    variance_operator: np.ndarray
    likelihood: float = float("nan")

    @property
    def n(self) -> int:
        return self.X.shape[0]


def _check_data(X: np.ndarray, y: np.ndarray, space: SearchSpace) -> Tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise InputException(f"{X.shape[0]} points but {y.shape[0]} observations")
    if X.shape[1] != space.dim:
        raise InputException(f"Points have {X.shape[1]} coordinates, space has {space.dim} dimensions")
    if not np.all(np.isfinite(y)):
        raise InputException("Observations must be finite")
    return X, y


def _factorize(K: np.ndarray) -> Optional[Tuple[np.ndarray, bool]]:
    try:
        return linalg.cho_factor(K, lower=True, check_finite=False)
    except (linalg.LinAlgError, ValueError):
        return None


def _generalized_least_squares(factor, y: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    ones = np.ones_like(y)
    k_inv_ones = linalg.cho_solve(factor, ones, check_finite=False)
    k_inv_y = linalg.cho_solve(factor, y, check_finite=False)
    mu = float(ones @ k_inv_y / (ones @ k_inv_ones))
    residual = y - mu
    alpha = linalg.cho_solve(factor, residual, check_finite=False)
    return mu, residual, alpha


def neg_concentrated_log_likelihood(
    params: KernelParams,
    X: np.ndarray,
    y: np.ndarray,
    kind: KernelKind,
    space: SearchSpace,
) -> float:
    """
    Concentrated negative log-likelihood ``n ln(sigma2) + ln det(K_eta)``.

    Args:
        params: Kernel parameters including the nugget
        X: Encoded training points, shape (n, d)
        y: Observations, shape (n,)
        kind: Kernel kind
        space: The search space

    Returns:
        The likelihood value, ``inf`` when the matrix cannot be factorized and
        ``DEGENERATE_LIKELIHOOD`` when the process variance vanishes

    Raises:
        InputException: For non-finite observations or mismatched shapes
    """
    X, y = _check_data(X, y, space)
    if np.ptp(y) == 0:
        return DEGENERATE_LIKELIHOOD

    K = kernel_matrix(kind, params, space, X).values
    factor = _factorize(K)
    if factor is None:
        return float("inf")

    _, residual, alpha = _generalized_least_squares(factor, y)
    sigma2 = float(residual @ alpha) / y.size
    if not np.isfinite(sigma2) or sigma2 <= 0:
        return DEGENERATE_LIKELIHOOD
    log_det = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    value = y.size * np.log(sigma2) + log_det
    return float(value) if np.isfinite(value) else float("inf")


def build_model(
    X: np.ndarray,
    y: np.ndarray,
    kind: KernelKind,
    space: SearchSpace,
    params: KernelParams,
    config: Optional[FitConfig] = None,
    sigma2: Optional[float] = None,
) -> KrigingModel:
    """
    Construct a model for fixed kernel parameters.

    Args:
        X: Encoded training points, shape (n, d)
        y: Observations
        kind: Kernel kind
        space: The search space
        params: Kernel parameters
        config: Fit configuration (re-interpolation flag)
        sigma2: Optional fixed process variance replacing the estimate

    Returns:
        The model with cached factorization and estimates

    Raises:
        ModelFitException: If the correlation matrix cannot be factorized
    """
    config = config or FitConfig()
    X, y = _check_data(X, y, space)
    correlation = kernel_matrix(kind, params, space, X)
    factor = _factorize(correlation.values)
    if factor is None:
        raise ModelFitException(
            f"Correlation matrix of the {kind.label} kernel is not positive definite",
            error_code="factorization",
        )

    mu, residual, alpha = _generalized_least_squares(factor, y)
    n = y.size
    sigma2_hat = max(float(residual @ alpha) / n, 0.0)

    # Re-interpolation: the interpolating part K_eta - eta I replaces K_eta in
    # the variance, with its pseudo-inverse in the predictive formula.
    interpolating = correlation.values - params.eta * np.eye(n)
    sigma2_ri = max(float(alpha @ interpolating @ alpha) / n, 0.0)
    if config.use_reinterpolation:
        operator = linalg.pinvh(interpolating)
    else:
        operator = linalg.cho_solve(factor, np.eye(n), check_finite=False)
    operator = 0.5 * (operator + operator.T)

    if sigma2 is not None:
        sigma2_hat = sigma2_ri = float(sigma2)

    return KrigingModel(
        space=space,
        X=X,
        y=y,
        kind=kind,
        params=params,
        config=config,
        correlation=correlation,
        factor=factor,
        mu_hat=mu,
        sigma2_hat=sigma2_hat,
        sigma2_ri=sigma2_ri,
        alpha=alpha,
        variance_operator=operator,
    )


def fit(
    X: np.ndarray,
    y: np.ndarray,
    kind: KernelKind,
    space: SearchSpace,
    config: Optional[FitConfig] = None,
) -> KrigingModel:
    """
    Fit kernel parameters by DIRECT over the ``param_bounds`` box.

    Args:
        X: Encoded training points, shape (n, d) with n >= 2
        y: Observations
        kind: Kernel kind
        space: The search space
        config: Fit configuration

    Returns:
        The fitted model

    Raises:
        InputException: For fewer than two points or non-finite observations
        ModelFitException: If no candidate parameter vector is feasible
    """
    config = config or FitConfig()
    X, y = _check_data(X, y, space)
    if X.shape[0] < 2:
        raise InputException("At least two training points are required to fit a model")

    bounds = param_bounds(kind, space, config)

    def objective(z: np.ndarray) -> float:
        params = params_from_unit(kind, space, bounds, z)
        return neg_concentrated_log_likelihood(params, X, y, kind, space)

    problem = BoxProblem(
        objective=objective,
        lower=np.zeros(bounds.size),
        upper=np.ones(bounds.size),
        budget=max(config.likelihood_budget, bounds.size + 1),
    )
    outcome = direct_minimize(problem)
    if not np.isfinite(outcome.fun):
        raise ModelFitException(
            f"No feasible parameters for the {kind.label} kernel within {outcome.nfev} likelihood evaluations",
            error_code="infeasible",
        )

    params = params_from_unit(kind, space, bounds, outcome.x)
    logger.debug(
        f"Fitted {kind.label} kernel on {X.shape[0]} points: "
        f"likelihood={outcome.fun:.6g}, evaluations={outcome.nfev}"
    )
    model = build_model(X, y, kind, space, params, config)
    return replace(model, likelihood=float(outcome.fun))


def predict(model: KrigingModel, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized mean and variance prediction.

    Args:
        model: A fitted model
        X: Encoded points, shape (m, d)

    Returns:
        Tuple of means and nonnegative variances, each of shape (m,)
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    k = cross_kernel(model.kind, model.params, model.space, model.X, X)
    mean = model.mu_hat + k.T @ model.alpha
    explained = np.einsum("im,im->m", k, model.variance_operator @ k)
    scale = model.sigma2_ri if model.config.use_reinterpolation else model.sigma2_hat
    variance = np.maximum(scale * (1.0 - explained), 0.0)
    return mean, variance


def predict_mean(model: KrigingModel, x: np.ndarray) -> float:
    """Kriging predictor at one encoded point."""
    k = cross_kernel(model.kind, model.params, model.space, model.X, np.asarray(x, dtype=float))
    return float(model.mu_hat + k @ model.alpha)


def predict_variance(model: KrigingModel, x: np.ndarray) -> float:
    """Uncertainty estimate at one encoded point, clamped at zero."""
    _, variance = predict(model, np.asarray(x, dtype=float)[None, :])
    return float(variance[0])
