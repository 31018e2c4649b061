"""
Correlation kernels for hierarchical search spaces.

Every kernel has the form ``k(x, x') = exp(-sum_i d_i(x_i, x'_i))``; the
kinds differ only in the per-dimension distance ``d_i`` and in how they treat
variable activity. The Arc distance uses the squared cylindrical embedding,
so the Arc coefficient absorbs the square of the embedding radius.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg

from app.core.config import settings
from app.core.exceptions import KernelDomainException, RepairException
from app.core.logging import get_logger
from app.models.schemas import (
    CategoricalDimension,
    FitConfig,
    KernelKind,
    NumericDimension,
    SearchSpace,
)
from app.services.space import activity_matrix

logger = get_logger("kernels")

# Imp imputation values may leave the box by this multiple of its width.
IMP_WIDENING = 2.0


@dataclass(frozen=True)
class KernelParams:
    """
    Kernel parameters, one entry per dimension.

    ``rho`` is the Arc scale for Arc, the mismatch distance for Ico/IcoCor and
    the imputed value for Imp and ImpArc (a level code for categorical
    dimensions, where ``len(levels)`` denotes the synthetic extra level).
    ImpArc additionally carries ``rho_arc`` and the weights ``beta``
    (row 0 weights the Arc part, row 1 the Imp part).
    """
    theta: np.ndarray
    rho: np.ndarray
    eta: float
    beta: Optional[np.ndarray] = None
    rho_arc: Optional[np.ndarray] = None


@dataclass(frozen=True)
class CorrelationMatrix:
    """Training correlation matrix with provenance flags."""
    values: np.ndarray
    nugget_added: bool
    flipped: bool

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ParamBounds:
    """Search box of the likelihood optimization."""
    names: List[str]
    roles: List[Tuple[str, int]]
    lower: np.ndarray
    upper: np.ndarray
    log_scale: np.ndarray
    integer: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def size(self) -> int:
        return len(self.names)

    def scale(self, z: np.ndarray) -> np.ndarray:
        """Map unit-cube coordinates to parameter values."""
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        values = self.lower + z * (self.upper - self.lower)
        log = self.log_scale
        if log.any():
            lo = np.log10(self.lower[log])
            hi = np.log10(self.upper[log])
            values[log] = 10.0 ** (lo + z[log] * (hi - lo))
        integer = self.integer
        if integer.any():
            span = self.upper[integer] - self.lower[integer]
            values[integer] = self.lower[integer] + np.minimum(np.floor(z[integer] * (span + 1.0)), span)
        return values


# --------------------------------------------------------------------------
# Per-dimension distances
# --------------------------------------------------------------------------

def _default_distance(dim, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if isinstance(dim, CategoricalDimension):
        return (a != b).astype(float)
    diff = a - b
    return diff * diff


def _arc_distance(dim, theta: float, rho: float, a, b, pa, pb) -> np.ndarray:
    if isinstance(dim, CategoricalDimension):
        raise KernelDomainException(
            f"The Arc distance is not defined for categorical dimension '{dim.name}'",
            error_code="arc_categorical",
        )
    embedded = theta * (2.0 - 2.0 * np.cos(np.pi * rho * (a - b) / dim.width))
    return np.where(pa & pb, embedded, np.where(pa != pb, theta, 0.0))


def _ico_distance(dim, theta: float, rho: float, a, b, pa, pb) -> np.ndarray:
    both = theta * _default_distance(dim, a, b)
    return np.where(pa & pb, both, np.where(pa != pb, rho, 0.0))


def _imp_distance(dim, theta: float, rho: float, a, b, pa, pb) -> np.ndarray:
    return theta * _default_distance(dim, np.where(pa, a, rho), np.where(pb, b, rho))


def _distances(kind: KernelKind, params: KernelParams, i: int, dim, a, b, pa, pb) -> np.ndarray:
    theta = params.theta[i]
    if kind is KernelKind.STAN:
        return theta * _default_distance(dim, a, b)
    if kind is KernelKind.ARC:
        return _arc_distance(dim, theta, params.rho[i], a, b, pa, pb)
    if kind in (KernelKind.ICO, KernelKind.ICO_CORRECTED):
        return _ico_distance(dim, theta, params.rho[i], a, b, pa, pb)
    if kind is KernelKind.IMP:
        return _imp_distance(dim, theta, params.rho[i], a, b, pa, pb)
    arc = _arc_distance(dim, theta, params.rho_arc[i], a, b, pa, pb)
    imp = _imp_distance(dim, theta, params.rho[i], a, b, pa, pb)
    return params.beta[0, i] * arc + params.beta[1, i] * imp


def dim_distance(
    kind: KernelKind,
    params: KernelParams,
    i: int,
    x: np.ndarray,
    x_other: np.ndarray,
    act: np.ndarray,
    act_other: np.ndarray,
    dim,
) -> float:
    """
    Distance of two points in dimension ``i``.

    Args:
        kind: Kernel kind
        params: Kernel parameters
        i: Dimension index
        x, x_other: Encoded points
        act, act_other: Activity vectors of the two points
        dim: The dimension declaration

    Returns:
        Nonnegative distance contribution

    Raises:
        KernelDomainException: For Arc-based kinds on categorical dimensions
    """
    value = _distances(
        kind, params, i, dim,
        np.asarray([x[i]], dtype=float), np.asarray([x_other[i]], dtype=float),
        np.asarray([act[i]], dtype=bool), np.asarray([act_other[i]], dtype=bool),
    )
    return float(value[0])


def _distance_sum(
    kind: KernelKind,
    params: KernelParams,
    space: SearchSpace,
    A: np.ndarray,
    B: np.ndarray,
) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if kind.uses_activity:
        act_a = activity_matrix(space, A)
        act_b = activity_matrix(space, B)
    else:
        act_a = np.ones(A.shape, dtype=bool)
        act_b = np.ones(B.shape, dtype=bool)

    total = np.zeros((A.shape[0], B.shape[0]))
    for i, dim in enumerate(space.dimensions):
        total += _distances(
            kind, params, i, dim,
            A[:, i, None], B[None, :, i],
            act_a[:, i, None], act_b[None, :, i],
        )
    return total


def kernel_eval(
    kind: KernelKind,
    params: KernelParams,
    space: SearchSpace,
    x: np.ndarray,
    x_other: np.ndarray,
) -> float:
    """Correlation of two encoded points, a value in (0, 1]."""
    total = _distance_sum(kind, params, space, np.asarray(x, dtype=float), np.asarray(x_other, dtype=float))
    return float(np.exp(-total[0, 0]))


def kernel_matrix(
    kind: KernelKind,
    params: KernelParams,
    space: SearchSpace,
    X: np.ndarray,
    add_nugget: bool = True,
) -> CorrelationMatrix:
    """
    Training correlation matrix.

    The IcoCor kind is repaired with a spectrum flip before the nugget is added.

    Args:
        kind: Kernel kind
        params: Kernel parameters
        space: The search space
        X: Encoded training points, shape (n, d)
        add_nugget: Whether to add ``params.eta`` to the diagonal

    Returns:
        The correlation matrix with provenance flags
    """
    validate_params(kind, space, params)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = np.exp(-_distance_sum(kind, params, space, X, X))
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)

    flipped = kind is KernelKind.ICO_CORRECTED
    if flipped:
        K = spectrum_flip(K)
    if add_nugget:
        K = K + params.eta * np.eye(K.shape[0])
    return CorrelationMatrix(values=K, nugget_added=add_nugget, flipped=flipped)


def cross_kernel(
    kind: KernelKind,
    params: KernelParams,
    space: SearchSpace,
    X: np.ndarray,
    x: np.ndarray,
) -> np.ndarray:
    """
    Correlations between training points and new points. Never repaired.

    Args:
        X: Training points, shape (n, d)
        x: One point of shape (d,) or a batch of shape (m, d)

    Returns:
        Shape (n,) for a single point, (n, m) for a batch
    """
    x = np.asarray(x, dtype=float)
    K = np.exp(-_distance_sum(kind, params, space, np.asarray(X, dtype=float), x))
    if x.ndim == 1:
        return K[:, 0]
    return K


# --------------------------------------------------------------------------
# Definiteness
# --------------------------------------------------------------------------

def spectrum_flip(K: np.ndarray) -> np.ndarray:
    """
    Replace every eigenvalue of a symmetric matrix by its absolute value.

    Raises:
        RepairException: If ``K`` is not symmetric or the eigendecomposition fails
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or not np.allclose(K, K.T, rtol=0.0, atol=1e-12):
        raise RepairException("Spectrum flip requires a symmetric square matrix")
    try:
        eigenvalues, eigenvectors = linalg.eigh(K)
    except (linalg.LinAlgError, ValueError) as e:
        raise RepairException("Eigendecomposition failed during spectrum flip", detail=str(e))
    repaired = (eigenvectors * np.abs(eigenvalues)) @ eigenvectors.T
    return 0.5 * (repaired + repaired.T)


def min_eigenvalue(K: np.ndarray) -> float:
    return float(linalg.eigvalsh(K)[0])


def is_psd(K: np.ndarray, tol: float = 0.0) -> bool:
    """True when the smallest eigenvalue is at least ``-tol``."""
    return min_eigenvalue(K) >= -tol


# --------------------------------------------------------------------------
# Parameters
# --------------------------------------------------------------------------

def imp_bounds(dim) -> Tuple[float, float]:
    """Domain of the Imp imputation value for one dimension."""
    if isinstance(dim, CategoricalDimension):
        return 0.0, float(len(dim.levels))
    widening = IMP_WIDENING * dim.width
    return dim.lower - widening, dim.upper + widening


def param_bounds(kind: KernelKind, space: SearchSpace, config: Optional[FitConfig] = None) -> ParamBounds:
    """
    Search box for the likelihood optimization.

    Scales, Ico mismatch distances, ImpArc weights and the nugget are searched
    on a log10 scale; Arc scales and Imp imputation values linearly. Mismatch
    distances and imputation values exist only for conditional dimensions.

    Args:
        kind: Kernel kind
        space: The search space
        config: Optional fit configuration overriding the nugget box

    Returns:
        Parameter names, roles, bounds and scale tags
    """
    names: List[str] = []
    roles: List[Tuple[str, int]] = []
    lower: List[float] = []
    upper: List[float] = []
    log_scale: List[bool] = []
    integer: List[bool] = []

    def add(name: str, role: str, index: int, lo: float, hi: float, log: bool, is_int: bool = False) -> None:
        names.append(name)
        roles.append((role, index))
        lower.append(lo)
        upper.append(hi)
        log_scale.append(log)
        integer.append(is_int)

    dims = list(enumerate(space.dimensions))
    scale_box = (settings.scale_lower, settings.scale_upper)

    if kind is KernelKind.IMP_ARC:
        for i, dim in dims:
            add(f"beta1_{dim.name}", "beta1", i, *scale_box, True)
        for i, dim in dims:
            add(f"beta2_{dim.name}", "beta2", i, *scale_box, True)
        for i, dim in dims:
            add(f"rho_arc_{dim.name}", "rho_arc", i, 0.0, 1.0, False)
    else:
        for i, dim in dims:
            add(f"theta_{dim.name}", "theta", i, *scale_box, True)

    if kind is KernelKind.ARC:
        for i, dim in dims:
            add(f"rho_{dim.name}", "rho", i, 0.0, 1.0, False)
    elif kind in (KernelKind.ICO, KernelKind.ICO_CORRECTED):
        for i, dim in dims:
            if space.is_conditional(i):
                add(f"rho_{dim.name}", "rho", i, *scale_box, True)
    elif kind in (KernelKind.IMP, KernelKind.IMP_ARC):
        for i, dim in dims:
            if space.is_conditional(i):
                lo, hi = imp_bounds(dim)
                add(f"rho_{dim.name}", "rho", i, lo, hi, False, isinstance(dim, CategoricalDimension))

    nugget_lower = settings.nugget_lower
    nugget_upper = settings.nugget_upper
    if config is not None:
        nugget_lower = config.nugget_lower if config.nugget_lower is not None else nugget_lower
        nugget_upper = config.nugget_upper if config.nugget_upper is not None else nugget_upper
    if nugget_lower > nugget_upper:
        raise KernelDomainException(f"Nugget box [{nugget_lower}, {nugget_upper}] is empty")
    add("eta", "eta", -1, nugget_lower, nugget_upper, True)

    return ParamBounds(
        names=names,
        roles=roles,
        lower=np.array(lower),
        upper=np.array(upper),
        log_scale=np.array(log_scale, dtype=bool),
        integer=np.array(integer, dtype=bool),
    )


def params_from_vector(kind: KernelKind, space: SearchSpace, bounds: ParamBounds, values: np.ndarray) -> KernelParams:
    """
    Assemble ``KernelParams`` from a vector in parameter units.

    Parameters the box does not search keep neutral placeholders: unit
    scales, unit Ico distances and zero imputation values on unconditional
    dimensions, where they never enter a distance.
    """
    d = space.dim
    theta = np.ones(d)
    rho = np.ones(d) if kind in (KernelKind.ICO, KernelKind.ICO_CORRECTED) else np.zeros(d)
    beta = np.zeros((2, d)) if kind is KernelKind.IMP_ARC else None
    rho_arc = np.zeros(d) if kind is KernelKind.IMP_ARC else None
    eta = 0.0
    for (role, i), value in zip(bounds.roles, values):
        if role == "theta":
            theta[i] = value
        elif role == "rho":
            rho[i] = value
        elif role == "rho_arc":
            rho_arc[i] = value
        elif role == "beta1":
            beta[0, i] = value
        elif role == "beta2":
            beta[1, i] = value
        else:
            eta = float(value)
    return KernelParams(theta=theta, rho=rho, eta=eta, beta=beta, rho_arc=rho_arc)


def params_from_unit(kind: KernelKind, space: SearchSpace, bounds: ParamBounds, z: np.ndarray) -> KernelParams:
    """Assemble ``KernelParams`` from unit-cube coordinates of the search box."""
    return params_from_vector(kind, space, bounds, bounds.scale(z))


def params_to_vector(params: KernelParams, bounds: ParamBounds) -> np.ndarray:
    """Read the searched entries of ``params`` in box order."""
    values = []
    for role, i in bounds.roles:
        if role == "theta":
            values.append(params.theta[i])
        elif role == "rho":
            values.append(params.rho[i])
        elif role == "rho_arc":
            values.append(params.rho_arc[i])
        elif role == "beta1":
            values.append(params.beta[0, i])
        elif role == "beta2":
            values.append(params.beta[1, i])
        else:
            values.append(params.eta)
    return np.array(values, dtype=float)


def validate_params(kind: KernelKind, space: SearchSpace, params: KernelParams) -> None:
    """
    Check the domain constraints of ``params`` for ``kind``.

    Raises:
        KernelDomainException: On any violated constraint
    """
    d = space.dim
    if params.theta.shape != (d,) or params.rho.shape != (d,):
        raise KernelDomainException(f"Parameter vectors must have length {d}")
    if not np.all(params.theta > 0):
        raise KernelDomainException("All theta values must be positive")
    if not params.eta > 0:
        raise KernelDomainException("The nugget must be positive")

    if kind is KernelKind.ARC and not np.all((params.rho >= 0) & (params.rho <= 1)):
        raise KernelDomainException("Arc rho values must lie in [0, 1]")
    if kind in (KernelKind.ICO, KernelKind.ICO_CORRECTED) and not np.all(params.rho > 0):
        raise KernelDomainException("Ico rho values must be positive")
    if kind is KernelKind.IMP_ARC:
        if params.beta is None or params.beta.shape != (2, d) or params.rho_arc is None:
            raise KernelDomainException("ImpArc needs beta of shape (2, d) and rho_arc")
        if not np.all(params.beta >= 0):
            raise KernelDomainException("ImpArc weights must be nonnegative")
        if not np.all((params.rho_arc >= 0) & (params.rho_arc <= 1)):
            raise KernelDomainException("ImpArc rho_arc values must lie in [0, 1]")
    if kind in (KernelKind.IMP, KernelKind.IMP_ARC):
        for i, dim in enumerate(space.dimensions):
            if not space.is_conditional(i):
                continue
            lo, hi = imp_bounds(dim)
            value = params.rho[i]
            if not lo <= value <= hi:
                raise KernelDomainException(f"Imp rho for '{dim.name}' must lie in [{lo}, {hi}]")
            if isinstance(dim, CategoricalDimension) and value != np.round(value):
                raise KernelDomainException(f"Imp rho for categorical '{dim.name}' must be a level code")
    if kind in (KernelKind.ARC, KernelKind.IMP_ARC):
        for dim in space.dimensions:
            if not isinstance(dim, NumericDimension):
                raise KernelDomainException(
                    f"The Arc distance is not defined for categorical dimension '{dim.name}'",
                    error_code="arc_categorical",
                )
