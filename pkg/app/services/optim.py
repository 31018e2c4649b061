"""
Derivative-free box-constrained optimizers.

DIRECT (deterministic, used for likelihood maximization) wraps
``scipy.optimize.direct``; Differential Evolution (rand/1/bin with clipping,
used for the infill criterion) is implemented on numpy arrays.
"""

from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional

import numpy as np
from scipy.optimize import Bounds, direct

from app.core.exceptions import OptimizationException
from app.core.logging import get_logger
from app.models.schemas import DEConfig

logger = get_logger("optim")

# Potential-optimality parameter of DIRECT.
DIRECT_EPSILON = 1e-4


@dataclass(frozen=True)
class BoxProblem:
    """
    Minimize ``objective`` over the box ``[lower, upper]``.

    With ``vectorized`` set, the objective takes an (m, p) batch and returns
    m values; otherwise it takes a single vector.
    """
    objective: Callable[[np.ndarray], object]
    lower: np.ndarray
    upper: np.ndarray
    budget: int
    vectorized: bool = False

    def __post_init__(self) -> None:
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise OptimizationException("Bounds must be vectors of equal length")
        if not np.all(lower < upper):
            raise OptimizationException("Lower bounds must be below upper bounds")
        if self.budget < lower.size + 1:
            raise OptimizationException(f"Budget {self.budget} is below dimension + 1 = {lower.size + 1}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Evaluate a batch of candidate vectors."""
        if self.vectorized:
            return np.asarray(self.objective(X), dtype=float).reshape(X.shape[0])
        return np.array([float(self.objective(row)) for row in X])


class OptimizeOutcome(NamedTuple):
    x: np.ndarray
    fun: float
    nfev: int


class DEOutcome(NamedTuple):
    x: np.ndarray
    fun: float
    nfev: int
    trace: List[float]


def direct_minimize(problem: BoxProblem) -> OptimizeOutcome:
    """
    Deterministic DIRECT search with the budget as a soft cap.

    Non-finite objective values are presented to DIRECT as one unit above the
    worst finite value seen so far; the reported optimum is always the best
    value actually returned by the objective.

    Args:
        problem: The box problem

    Returns:
        Best evaluated vector, its value and the number of objective calls
    """
    best_x: Optional[np.ndarray] = None
    best_f = float("inf")
    worst_finite: Optional[float] = None
    calls = 0

    def wrapped(x: np.ndarray) -> float:
        nonlocal best_x, best_f, worst_finite, calls
        x = np.clip(np.asarray(x, dtype=float), problem.lower, problem.upper)
        value = float(problem.evaluate(x[None, :])[0])
        calls += 1
        if best_x is None or (np.isfinite(value) and value < best_f):
            best_x, best_f = x.copy(), (value if np.isfinite(value) else float("inf"))
        if np.isfinite(value):
            worst_finite = value if worst_finite is None else max(worst_finite, value)
            return value
        return (worst_finite if worst_finite is not None else 0.0) + 1.0

    direct(
        wrapped,
        Bounds(problem.lower, problem.upper),
        eps=DIRECT_EPSILON,
        maxfun=problem.budget,
        maxiter=problem.budget,
        locally_biased=False,
    )
    logger.debug(f"DIRECT finished after {calls} evaluations, best={best_f:.6g}")
    return OptimizeOutcome(x=best_x, fun=best_f, nfev=calls)


def de_minimize(
    problem: BoxProblem,
    config: Optional[DEConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> DEOutcome:
    """
    Differential Evolution, strategy rand/1/bin, bound repair by clipping.

    The population is initialized uniformly and counts as the first
    generation; ``floor(budget / NP)`` generations are evaluated in total.

    Args:
        problem: The box problem
        config: DE settings, population ``10 * dimension`` by default
        rng: Random stream, fully determining the run

    Returns:
        Best vector, its value, evaluations used and the best value per generation
    """
    config = config or DEConfig()
    rng = rng if rng is not None else np.random.default_rng()
    d = problem.dim
    size = min(config.population or 10 * d, problem.budget)
    generations = problem.budget // size
    if size < 4:
        # rand/1/bin needs three donors besides the target.
        generations = 1

    span = problem.upper - problem.lower
    population = problem.lower + rng.random((size, d)) * span
    fitness = problem.evaluate(population)
    nfev = size
    trace = [float(np.min(fitness))]

    rows = np.arange(size)
    for _ in range(generations - 1):
        # Three distinct donors per target, none equal to the target.
        keys = rng.random((size, size))
        keys[rows, rows] = np.inf
        donors = np.argsort(keys, axis=1)[:, :3]
        mutant = population[donors[:, 0]] + config.weight * (
            population[donors[:, 1]] - population[donors[:, 2]]
        )

        cross = rng.random((size, d)) < config.crossover
        cross[rows, rng.integers(0, d, size=size)] = True
        trial = np.clip(np.where(cross, mutant, population), problem.lower, problem.upper)

        trial_fitness = problem.evaluate(trial)
        nfev += size
        improved = trial_fitness <= fitness
        population[improved] = trial[improved]
        fitness[improved] = trial_fitness[improved]
        trace.append(float(np.min(fitness)))

    best = int(np.argmin(fitness))
    return DEOutcome(x=population[best].copy(), fun=float(fitness[best]), nfev=nfev, trace=trace)
