"""
Expected improvement and the sequential model-based optimization loop.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np
from scipy.stats import norm

from app.core.exceptions import ModelFitException
from app.core.logging import get_logger
from app.models.schemas import SearchSpace, SmboConfig
from app.services import gp
from app.services.optim import BoxProblem, de_minimize
from app.services.space import (
    lower_bounds,
    sample_lhs,
    sample_uniform,
    snap,
    upper_bounds,
)

logger = get_logger("smbo")

ArrayLike = Union[float, np.ndarray]

ORIGIN_INITIAL = "initial"
ORIGIN_INFILL = "infill"
ORIGIN_PERTURBED = "perturbed"
ORIGIN_FALLBACK = "fallback"


def expected_improvement(mean: ArrayLike, sd: ArrayLike, y_min: float) -> ArrayLike:
    """
    Expected improvement over ``y_min`` of a normal prediction.

    Works elementwise on arrays; a zero standard deviation yields the plain
    improvement ``max(y_min - mean, 0)``.
    """
    mean_arr = np.asarray(mean, dtype=float)
    sd_arr = np.asarray(sd, dtype=float)
    improvement = y_min - mean_arr
    positive = sd_arr > 0
    safe_sd = np.where(positive, sd_arr, 1.0)
    u = improvement / safe_sd
    ei = improvement * norm.cdf(u) + safe_sd * norm.pdf(u)
    ei = np.where(positive, ei, improvement)
    ei = np.maximum(ei, 0.0)
    if np.ndim(ei) == 0:
        return float(ei)
    return ei


@dataclass(frozen=True)
class HistoryEntry:
    point: np.ndarray
    value: float
    iteration: int
    initial: bool
    origin: str = ORIGIN_INITIAL


@dataclass
class SmboHistory:
    """Evaluated points in evaluation order."""
    entries: List[HistoryEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, entry: HistoryEntry) -> None:
        self.entries.append(entry)

    @property
    def X(self) -> np.ndarray:
        return np.array([entry.point for entry in self.entries])

    @property
    def y(self) -> np.ndarray:
        return np.array([entry.value for entry in self.entries])

    @property
    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.y)

    @property
    def best_value(self) -> float:
        return float(np.min(self.y))

    @property
    def best_point(self) -> np.ndarray:
        return self.entries[int(np.argmin(self.y))].point

    def count(self, origin: str) -> int:
        return sum(1 for entry in self.entries if entry.origin == origin)


def _is_duplicate(X: np.ndarray, x: np.ndarray, tolerance: float) -> bool:
    return bool(np.any(np.all(np.abs(X - x) <= tolerance, axis=1)))


def _perturb(space: SearchSpace, x: np.ndarray, radius: float, rng: np.random.Generator) -> np.ndarray:
    moved = x + rng.uniform(-radius, radius, size=x.shape)
    return snap(space, moved)[0]


def propose(model: gp.KrigingModel, config: SmboConfig, rng: np.random.Generator) -> np.ndarray:
    """
    Maximize expected improvement over the full box of the model's space.

    Returns:
        The encoded candidate point
    """
    space = model.space
    y_min = float(np.min(model.y))

    def negative_ei(Z: np.ndarray) -> np.ndarray:
        mean, variance = gp.predict(model, snap(space, Z))
        return -expected_improvement(mean, np.sqrt(variance), y_min)

    problem = BoxProblem(
        objective=negative_ei,
        lower=lower_bounds(space),
        upper=upper_bounds(space),
        budget=config.de_budget,
        vectorized=True,
    )
    outcome = de_minimize(problem, config.de, rng)
    logger.debug(f"EI maximized to {-outcome.fun:.6g} with {outcome.nfev} evaluations")
    return snap(space, outcome.x)[0]


def smbo_run(
    objective: Callable[[np.ndarray], float],
    space: SearchSpace,
    config: Optional[SmboConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> SmboHistory:
    """
    Run one sequential model-based optimization.

    Evaluates the initial design, then repeatedly fits a model to all data,
    maximizes expected improvement and evaluates the proposal until the budget
    of objective evaluations is spent. A failed model fit is replaced by a
    fresh uniform random point for that iteration.

    Args:
        objective: Deterministic function of an encoded point
        space: The search space
        config: Loop configuration
        rng: Random stream, fully determining the run

    Returns:
        The evaluation history
    """
    config = config or SmboConfig()
    rng = rng if rng is not None else np.random.default_rng()
    history = SmboHistory()

    sampler = sample_lhs if config.design == "lhs" else sample_uniform
    for x in sampler(space, config.init_size, rng):
        history.append(HistoryEntry(point=x, value=float(objective(x)), iteration=0, initial=True))

    iteration = 0
    while len(history) < config.total_budget:
        iteration += 1
        X, y = history.X, history.y
        try:
            model = gp.fit(X, y, config.kernel, space, config.fit)
            candidate = propose(model, config, rng)
            origin = ORIGIN_INFILL
            if _is_duplicate(X, candidate, config.duplicate_tolerance):
                candidate = _perturb(space, candidate, config.perturbation_radius, rng)
                origin = ORIGIN_PERTURBED
        except ModelFitException as e:
            logger.warning(f"Iteration {iteration}: model fit failed ({e.message}); evaluating a random point")
            candidate = sample_uniform(space, 1, rng)[0]
            origin = ORIGIN_FALLBACK

        value = float(objective(candidate))
        history.append(HistoryEntry(point=candidate, value=value, iteration=iteration, initial=False, origin=origin))
        logger.debug(f"Iteration {iteration}: f={value:.6g}, best={history.best_value:.6g} ({origin})")

    return history
