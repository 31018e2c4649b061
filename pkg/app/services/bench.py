"""
Benchmark harness: the hierarchical quadratic test function, its situation
taxonomy, the model-quality and optimization studies, and results I/O.

Study cells (spec x kernel x replication) are independent jobs. Each job
derives its seed from (master seed, study, b, c, d, replication) only, so
every kernel of a replication sees the same training data, test data and
initial designs, and results do not depend on the number of workers.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.exceptions import (
    ClassificationException,
    DomainException,
    InputException,
    ModelFitException,
    StatisticsException,
)
from app.core.logging import get_logger
from app.models.schemas import (
    ALL_KERNELS,
    RESULT_COLUMNS,
    FitConfig,
    KernelKind,
    Situation,
    SmboConfig,
    StudyKind,
    StudyRecord,
    TestFunctionSpec,
)
from app.services import gp
from app.services.smbo import smbo_run
from app.services.space import benchmark_space, sample_uniform
from app.utils.helpers import mix_seed

logger = get_logger("bench")

GRID_B: Tuple[float, ...] = (0.0, 0.1)
GRID_C: Tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
GRID_D: Tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)


# --------------------------------------------------------------------------
# Test function
# --------------------------------------------------------------------------

def _check_box(X: np.ndarray) -> None:
    if X.shape[-1] != 2:
        raise DomainException(f"Test function takes 2 coordinates, got {X.shape[-1]}")
    if not np.all(np.isfinite(X)) or np.any(X < 0.0) or np.any(X > 1.0):
        raise DomainException("Test function is defined on [0, 1]^2 only")


def test_function_batch(spec: TestFunctionSpec, X: np.ndarray) -> np.ndarray:
    """
    Evaluate the test function on rows of ``X``.

    ``f(x) = (x1 - d)^2`` while ``x2`` is inactive (``x1 <= c``), and
    ``(x1 - d)^2 + (x2 - 0.5)^2 + b`` otherwise.

    Raises:
        DomainException: If any row lies outside [0, 1]^2
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_box(X)
    x1, x2 = X[:, 0], X[:, 1]
    conditional = np.where(x1 <= spec.c, 0.0, (x2 - 0.5) ** 2 + spec.b)
    return (x1 - spec.d) ** 2 + conditional


def test_function(spec: TestFunctionSpec, x: Sequence[float]) -> float:
    """Evaluate the test function at one point of [0, 1]^2."""
    return float(test_function_batch(spec, np.asarray(x, dtype=float)[None, :])[0])


# Helper names starting with "test" are not pytest tests.
test_function.__test__ = False
test_function_batch.__test__ = False


def classify_situation(spec: TestFunctionSpec) -> Situation:
    """
    Situation label of a test instance.

    Raises:
        ClassificationException: For ``d == c`` or ``b == (c - d)^2`` with ``d > c``
    """
    b, c, d = spec.b, spec.c, spec.d
    if d == c:
        raise ClassificationException(f"Optimum location d={d} coincides with threshold c={c}")
    if d < c:
        return Situation.A if b == 0 else Situation.B
    if b == 0:
        return Situation.C
    gap = (c - d) ** 2
    if b == gap:
        raise ClassificationException(f"b={b} equals (c - d)^2 for c={c}, d={d}")
    return Situation.D if b < gap else Situation.E


class OptimumInfo(NamedTuple):
    """Global optimum of a test instance. ``x2 = None`` means any value of x2."""
    value: float
    x1: float
    x2: Optional[float]


def global_optimum(spec: TestFunctionSpec) -> OptimumInfo:
    """Analytic minimum value and argmin set of a test instance."""
    situation = classify_situation(spec)
    if situation in (Situation.A, Situation.B):
        return OptimumInfo(value=0.0, x1=spec.d, x2=None)
    if situation is Situation.C:
        return OptimumInfo(value=0.0, x1=spec.d, x2=0.5)
    if situation is Situation.D:
        return OptimumInfo(value=spec.b, x1=spec.d, x2=0.5)
    return OptimumInfo(value=(spec.c - spec.d) ** 2, x1=spec.c, x2=None)


def rmse(predictions: Sequence[float], truths: Sequence[float]) -> float:
    """Root mean squared error between paired values."""
    predictions = np.asarray(predictions, dtype=float).ravel()
    truths = np.asarray(truths, dtype=float).ravel()
    if predictions.size != truths.size:
        raise InputException(f"{predictions.size} predictions but {truths.size} truths")
    if predictions.size == 0:
        raise InputException("RMSE needs at least one value")
    return float(np.sqrt(np.mean((predictions - truths) ** 2)))


def reference_grid() -> List[TestFunctionSpec]:
    """The 40 reference instances in b-major order."""
    return [TestFunctionSpec(b=b, c=c, d=d) for b in GRID_B for c in GRID_C for d in GRID_D]


def job_seed(master_seed: int, study: StudyKind, spec: TestFunctionSpec, replication: int) -> int:
    """Seed of all kernels' jobs for one (study, spec, replication)."""
    return mix_seed(master_seed, study.value, float(spec.b), float(spec.c), float(spec.d), int(replication))


# --------------------------------------------------------------------------
# Studies
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyJob:
    """One study cell, self-contained so it can be shipped to a worker process."""
    study: StudyKind
    kernel: KernelKind
    spec: TestFunctionSpec
    replication: int
    seed: int
    fit: FitConfig
    train_size: int = 10
    test_size: int = 1000
    smbo: Optional[SmboConfig] = None
    record_timings: bool = False


def _model_quality_metric(job: StudyJob) -> float:
    space = benchmark_space(job.spec.c)
    rng = np.random.default_rng(job.seed)
    X = sample_uniform(space, job.train_size, rng)
    X_test = sample_uniform(space, job.test_size, rng)
    model = gp.fit(X, test_function_batch(job.spec, X), job.kernel, space, job.fit)
    mean, _ = gp.predict(model, X_test)
    return rmse(mean, test_function_batch(job.spec, X_test))


def _smbo_metric(job: StudyJob) -> float:
    space = benchmark_space(job.spec.c)
    rng = np.random.default_rng(job.seed)
    config = job.smbo.model_copy(update={"kernel": job.kernel, "fit": job.fit})
    history = smbo_run(lambda x: test_function(job.spec, x), space, config, rng)
    return history.best_value - global_optimum(job.spec).value


def run_job(job: StudyJob) -> StudyRecord:
    """Execute one study cell; fit failures yield a flagged record with NaN metric."""
    started = time.perf_counter()
    failed = False
    try:
        if job.study is StudyKind.MODEL_QUALITY:
            metric = _model_quality_metric(job)
        else:
            metric = _smbo_metric(job)
    except ModelFitException as e:
        logger.warning(
            f"{job.kernel.label} failed on b={job.spec.b}, c={job.spec.c}, d={job.spec.d}, "
            f"rep={job.replication}: {e.message}"
        )
        metric, failed = float("nan"), True
    elapsed = time.perf_counter() - started

    return StudyRecord(
        study=job.study,
        kernel=job.kernel,
        b=job.spec.b,
        c=job.spec.c,
        d=job.spec.d,
        situation=classify_situation(job.spec),
        replication=job.replication,
        metric=metric,
        seed=job.seed,
        wall_time_s=elapsed if job.record_timings else 0.0,
        failed=failed,
    )


def run_jobs(jobs: Sequence[StudyJob], workers: int = 1,
             runner: Callable[[StudyJob], StudyRecord] = run_job) -> List[StudyRecord]:
    """
    Execute jobs in-process or on a process pool.

    Returns:
        Records sorted by (study, kernel, b, c, d, replication)
    """
    if workers <= 1 or len(jobs) <= 1:
        records = [runner(job) for job in jobs]
    else:
        chunksize = max(1, len(jobs) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as executor:
            records = list(executor.map(runner, jobs, chunksize=chunksize))
    return sorted(records, key=StudyRecord.sort_key)


def impute_failures(records: Iterable[StudyRecord]) -> List[StudyRecord]:
    """
    Replace the metric of failed cells by the worst metric of their block.

    A block is one (b, c, d, replication) across kernels. Blocks where every
    kernel failed keep NaN metrics.
    """
    records = list(records)
    worst: Dict[Tuple, float] = {}
    for record in records:
        if record.failed or math.isnan(record.metric):
            continue
        block = (record.b, record.c, record.d, record.replication)
        worst[block] = max(worst.get(block, -math.inf), record.metric)

    imputed = []
    for record in records:
        block = (record.b, record.c, record.d, record.replication)
        if record.failed and block in worst:
            record = record.model_copy(update={"metric": worst[block]})
        imputed.append(record)
    return imputed


def _build_jobs(
    study: StudyKind,
    grid: Sequence[TestFunctionSpec],
    kernels: Sequence[KernelKind],
    reps: int,
    master_seed: int,
    fit: Optional[FitConfig],
    smbo: Optional[SmboConfig] = None,
    record_timings: bool = False,
) -> List[StudyJob]:
    if reps < 1:
        raise InputException(f"Replication count must be at least 1, got {reps}")
    for spec in grid:
        classify_situation(spec)

    fit = fit or FitConfig()
    jobs = []
    for spec in grid:
        for replication in range(reps):
            seed = job_seed(master_seed, study, spec, replication)
            for kernel in kernels:
                jobs.append(StudyJob(
                    study=study,
                    kernel=KernelKind.parse(kernel),
                    spec=spec,
                    replication=replication,
                    seed=seed,
                    fit=fit,
                    train_size=settings.train_size,
                    test_size=settings.test_size,
                    smbo=smbo,
                    record_timings=record_timings,
                ))
    return jobs


def run_model_quality(
    grid: Sequence[TestFunctionSpec],
    kernels: Sequence[KernelKind] = ALL_KERNELS,
    reps: int = 20,
    master_seed: int = 1,
    workers: int = 1,
    fit: Optional[FitConfig] = None,
    record_timings: bool = False,
) -> List[StudyRecord]:
    """
    Model-quality study: per cell fit 10 uniform training points and record
    the RMSE on 1000 uniform test points.

    Args:
        grid: Test instances
        kernels: Kernels to compare
        reps: Replications per instance
        master_seed: Master seed
        workers: Worker processes
        fit: Likelihood fit configuration
        record_timings: Store measured wall time instead of 0.0

    Returns:
        Sorted records with failures imputed
    """
    jobs = _build_jobs(StudyKind.MODEL_QUALITY, grid, kernels, reps, master_seed, fit,
                       record_timings=record_timings)
    logger.info(f"Model-quality study: {len(jobs)} cells on {workers} worker(s)")
    records = impute_failures(run_jobs(jobs, workers))
    _log_failures(records)
    return records


def run_smbo_study(
    grid: Sequence[TestFunctionSpec],
    kernels: Sequence[KernelKind] = ALL_KERNELS,
    reps: int = 20,
    master_seed: int = 1,
    workers: int = 1,
    smbo: Optional[SmboConfig] = None,
    record_timings: bool = False,
) -> List[StudyRecord]:
    """
    Optimization study: per cell run SMBO on the test function and record the
    suboptimality of the best value found.

    Args:
        grid: Test instances
        kernels: Kernels to compare
        reps: Replications per instance
        master_seed: Master seed
        workers: Worker processes
        smbo: Loop configuration; its kernel is replaced per cell
        record_timings: Store measured wall time instead of 0.0

    Returns:
        Sorted records with failures imputed
    """
    smbo = smbo or SmboConfig()
    jobs = _build_jobs(StudyKind.SMBO, grid, kernels, reps, master_seed, smbo.fit, smbo,
                       record_timings=record_timings)
    logger.info(
        f"SMBO study: {len(jobs)} cells, budget {smbo.total_budget}, "
        f"init {smbo.init_size}, on {workers} worker(s)"
    )
    records = impute_failures(run_jobs(jobs, workers))
    _log_failures(records)
    return records


def _log_failures(records: Sequence[StudyRecord]) -> None:
    failures = sum(record.failed for record in records)
    if failures:
        logger.warning(f"{failures} of {len(records)} cells failed and were imputed")
    logger.info(f"Study finished with {len(records)} records")


# --------------------------------------------------------------------------
# Results I/O and summaries
# --------------------------------------------------------------------------

def records_to_frame(records: Iterable[StudyRecord]) -> pd.DataFrame:
    """Tabulate records with the results-file columns."""
    rows = [
        {
            "study": record.study.value,
            "kernel": record.kernel.value,
            "b": record.b,
            "c": record.c,
            "d": record.d,
            "situation": record.situation.value,
            "replication": record.replication,
            "metric": record.metric,
            "seed": record.seed,
            "wall_time_s": record.wall_time_s,
            "failed": bool(record.failed),
        }
        for record in records
    ]
    return pd.DataFrame(rows, columns=list(RESULT_COLUMNS))


def write_records(records: Iterable[StudyRecord], path: Path) -> Path:
    """Write records as a results CSV, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = records_to_frame(records)
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} records to {path}")
    return path


def read_records(path: Path) -> pd.DataFrame:
    """
    Read and validate a results CSV.

    Raises:
        StatisticsException: If the file is missing or violates the schema
    """
    path = Path(path)
    if not path.is_file():
        raise StatisticsException(f"Results file not found: {path}")
    frame = pd.read_csv(path, dtype={"study": str, "kernel": str, "situation": str})

    missing = [column for column in RESULT_COLUMNS if column not in frame.columns]
    if missing:
        raise StatisticsException(f"Results file {path} lacks columns: {', '.join(missing)}")
    frame = frame[list(RESULT_COLUMNS)]

    known_studies = {kind.value for kind in StudyKind}
    bad_studies = set(frame["study"]) - known_studies
    if bad_studies:
        raise StatisticsException(f"Unknown study values: {sorted(bad_studies)}")
    known_kernels = {kind.value for kind in KernelKind}
    bad_kernels = set(frame["kernel"]) - known_kernels
    if bad_kernels:
        raise StatisticsException(f"Unknown kernel values: {sorted(bad_kernels)}")
    bad_situations = set(frame["situation"]) - {situation.value for situation in Situation}
    if bad_situations:
        raise StatisticsException(f"Unknown situation values: {sorted(bad_situations)}")

    try:
        for column in ("b", "c", "d", "metric", "wall_time_s"):
            frame[column] = frame[column].astype(float)
        for column in ("replication", "seed"):
            frame[column] = frame[column].astype(np.int64)
        frame["failed"] = frame["failed"].astype(str).str.lower().map({"true": True, "false": False})
    except (TypeError, ValueError) as e:
        raise StatisticsException(f"Malformed value in {path}", detail=str(e))
    if frame["failed"].isna().any():
        raise StatisticsException(f"Column 'failed' of {path} must hold True/False")
    return frame


def summarize_model_quality(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Median RMSE per test instance and kernel.

    Returns:
        Wide table indexed by (b, c, d) with one column per kernel label
    """
    subset = frame[frame["study"] == StudyKind.MODEL_QUALITY.value]
    if subset.empty:
        raise StatisticsException("No model-quality records to summarize")
    table = subset.pivot_table(index=["b", "c", "d"], columns="kernel", values="metric", aggfunc="median")
    order = [kind.value for kind in ALL_KERNELS if kind.value in table.columns]
    table = table[order]
    table.columns = [KernelKind(value).label for value in order]
    return table


def model_slices(
    spec: TestFunctionSpec,
    kernels: Sequence[KernelKind] = ALL_KERNELS,
    seed: int = 1,
    x2_values: Sequence[float] = (0.5, 0.75),
    points: int = 101,
    fit: Optional[FitConfig] = None,
) -> pd.DataFrame:
    """
    Tabulate the true function and each kernel's prediction along x1 for
    fixed values of x2, with all models trained on the same uniform sample.

    Returns:
        Long table with columns x2, x1, truth and one column per kernel label
    """
    if points < 2:
        raise InputException(f"Slices need at least 2 points, got {points}")
    space = benchmark_space(spec.c)
    rng = np.random.default_rng(seed)
    X = sample_uniform(space, settings.train_size, rng)
    y = test_function_batch(spec, X)

    x1 = np.linspace(0.0, 1.0, points)
    frames = []
    for x2 in x2_values:
        grid = np.column_stack([x1, np.full(points, float(x2))])
        frames.append(pd.DataFrame({"x2": grid[:, 1], "x1": x1, "truth": test_function_batch(spec, grid)}))
    table = pd.concat(frames, ignore_index=True)
    query = table[["x1", "x2"]].to_numpy()

    for kernel in kernels:
        kernel = KernelKind.parse(kernel)
        try:
            model = gp.fit(X, y, kernel, space, fit)
            table[kernel.label] = gp.predict(model, query)[0]
        except ModelFitException as e:
            logger.warning(f"{kernel.label} could not be fitted for slices: {e.message}")
            table[kernel.label] = np.nan
    return table
