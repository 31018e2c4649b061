"""
Test configuration for hierkrig.
Sets up shared fixtures and the ``slow`` marker for desk-scale studies.
"""

import numpy as np
import pytest

from app.models.schemas import (
    ActivityRule,
    CategoricalDimension,
    KernelKind,
    NumericDimension,
    SearchSpace,
)
from app.services.kernels import KernelParams
from app.services.space import benchmark_space


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="Run desk-scale studies (minutes to hours)")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale study, only run with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    """Seeded random stream."""
    return np.random.default_rng(12345)


@pytest.fixture
def bench_space():
    """Benchmark unit square, x2 active iff x1 > 0.4."""
    return benchmark_space(0.4)


@pytest.fixture
def line_space():
    """One unconditional numeric dimension on [0, 1]."""
    return SearchSpace(dimensions=(NumericDimension(name="x", lower=0.0, upper=1.0),))


@pytest.fixture
def mixed_space():
    """Numeric, categorical and a categorical child of a categorical parent."""
    return SearchSpace(
        dimensions=(
            NumericDimension(name="lr", lower=0.0, upper=2.0),
            CategoricalDimension(name="solver", levels=("sgd", "adam", "lbfgs")),
            CategoricalDimension(name="schedule", levels=("constant", "cosine")),
            NumericDimension(name="momentum", lower=0.0, upper=1.0),
        ),
        rules=(
            ActivityRule(target=2, parent=1, levels=("sgd", "adam")),
            ActivityRule(target=3, parent=0, operator=">=", threshold=1.0),
        ),
    )


@pytest.fixture
def oracle_design():
    """Three-point design on [0, 1] with a single bump."""
    return np.array([[0.0], [0.5], [1.0]]), np.array([0.0, 1.0, 0.0])


def _make_params(kind: KernelKind, d: int = 2, theta=None, rho=None, eta: float = 1e-6,
                beta=None, rho_arc=None) -> KernelParams:
    """Valid parameters for ``kind`` with sensible defaults."""
    theta = np.ones(d) if theta is None else np.asarray(theta, dtype=float)
    if rho is None:
        rho = np.ones(d) if kind in (KernelKind.ICO, KernelKind.ICO_CORRECTED) else np.full(d, 0.5)
    rho = np.asarray(rho, dtype=float)
    if kind is KernelKind.IMP_ARC:
        beta = np.ones((2, d)) if beta is None else np.asarray(beta, dtype=float)
        rho_arc = np.full(d, 0.5) if rho_arc is None else np.asarray(rho_arc, dtype=float)
    return KernelParams(theta=theta, rho=rho, eta=eta, beta=beta, rho_arc=rho_arc)


@pytest.fixture
def params_for():
    """Factory of valid kernel parameters."""
    return _make_params
