"""
Tests for the Kriging model: likelihood, fitting and prediction against
dense-matrix computations written directly with numpy.linalg.
"""

import numpy as np
import pytest

from app.core.exceptions import InputException
from app.models.schemas import FitConfig, KernelKind, TestFunctionSpec
from app.services import gp
from app.services.bench import test_function_batch
from app.services.kernels import KernelParams, kernel_matrix
from app.services.space import activity_matrix, benchmark_space, sample_uniform


def _stan_oracle(X, y, theta, eta, x_new):
    """Dense ordinary Kriging with a squared-exponential correlation."""
    def corr(A, B):
        diff = A[:, None, :] - B[None, :, :]
        return np.exp(-np.sum(theta * diff ** 2, axis=2))

    n = len(y)
    R = corr(X, X)
    K = R + eta * np.eye(n)
    K_inv = np.linalg.inv(K)
    ones = np.ones(n)
    mu = ones @ K_inv @ y / (ones @ K_inv @ ones)
    alpha = K_inv @ (y - mu)
    sigma2 = (y - mu) @ alpha / n
    nll = n * np.log(sigma2) + np.linalg.slogdet(K)[1]

    k = corr(X, x_new)
    mean = mu + k.T @ alpha
    sigma2_ri = alpha @ R @ alpha / n
    var_ri = sigma2_ri * (1.0 - np.einsum("im,im->m", k, np.linalg.inv(R) @ k))
    var_plain = sigma2 * (1.0 - np.einsum("im,im->m", k, K_inv @ k))
    return nll, mean, var_ri, var_plain


def test_likelihood_matches_dense_oracle(line_space, oracle_design):
    X, y = oracle_design
    params = KernelParams(theta=np.array([1.0]), rho=np.zeros(1), eta=1e-6)
    value = gp.neg_concentrated_log_likelihood(params, X, y, KernelKind.STAN, line_space)
    expected, _, _, _ = _stan_oracle(X, y, np.array([1.0]), 1e-6, X)
    assert value == pytest.approx(expected, abs=1e-8)


def test_predictions_match_dense_oracle(line_space, oracle_design):
    X, y = oracle_design
    params = KernelParams(theta=np.array([1.0]), rho=np.zeros(1), eta=1e-6)
    x_new = np.array([[0.25], [0.8]])
    _, mean, var_ri, var_plain = _stan_oracle(X, y, np.array([1.0]), 1e-6, x_new)

    model = gp.build_model(X, y, KernelKind.STAN, line_space, params)
    got_mean, got_var = gp.predict(model, x_new)
    assert np.allclose(got_mean, mean, rtol=0, atol=1e-8)
    assert np.allclose(got_var, var_ri, rtol=0, atol=1e-8)
    assert gp.predict_mean(model, np.array([0.25])) == pytest.approx(mean[0], abs=1e-8)
    assert gp.predict_variance(model, np.array([0.25])) == pytest.approx(var_ri[0], abs=1e-8)

    plain = gp.build_model(X, y, KernelKind.STAN, line_space, params, FitConfig(use_reinterpolation=False))
    assert np.allclose(gp.predict(plain, x_new)[1], var_plain, rtol=0, atol=1e-8)


def test_five_point_imp_oracle(bench_space):
    X = np.array([[0.1, 0.9], [0.3, 0.2], [0.5, 0.5], [0.7, 0.1], [0.95, 0.8]])
    spec = TestFunctionSpec(b=0.1, c=0.4, d=0.7)
    y = test_function_batch(spec, X)
    theta = np.array([4.0, 2.0])
    params = KernelParams(theta=theta, rho=np.array([0.0, 0.35]), eta=1e-6)
    x_new = np.array([[0.2, 0.4], [0.45, 0.6], [0.85, 0.3]])

    def impute(A):
        return np.where(activity_matrix(bench_space, A), A, params.rho)

    _, mean, var_ri, _ = _stan_oracle(impute(X), y, theta, 1e-6, impute(x_new))
    model = gp.build_model(X, y, KernelKind.IMP, bench_space, params)
    got_mean, got_var = gp.predict(model, x_new)
    assert np.allclose(got_mean, mean, rtol=0, atol=1e-8)
    assert np.allclose(got_var, var_ri, rtol=0, atol=1e-8)


def test_constant_observations_are_degenerate(line_space, oracle_design):
    X, _ = oracle_design
    params = KernelParams(theta=np.array([1.0]), rho=np.zeros(1), eta=1e-6)
    value = gp.neg_concentrated_log_likelihood(params, X, np.full(3, 2.5), KernelKind.STAN, line_space)
    assert value == gp.DEGENERATE_LIKELIHOOD


def test_nugget_increases_log_determinant(bench_space, rng):
    X = sample_uniform(bench_space, 8, rng)
    small = KernelParams(theta=np.array([2.0, 2.0]), rho=np.array([0.0, 0.5]), eta=1e-4)
    large = KernelParams(theta=np.array([2.0, 2.0]), rho=np.array([0.0, 0.5]), eta=2e-4)
    det_small = np.linalg.slogdet(kernel_matrix(KernelKind.IMP, small, bench_space, X).values)[1]
    det_large = np.linalg.slogdet(kernel_matrix(KernelKind.IMP, large, bench_space, X).values)[1]
    assert det_large > det_small


def test_non_finite_observations_rejected(line_space, oracle_design):
    X, _ = oracle_design
    params = KernelParams(theta=np.array([1.0]), rho=np.zeros(1), eta=1e-6)
    with pytest.raises(InputException):
        gp.neg_concentrated_log_likelihood(params, X, np.array([0.0, np.nan, 1.0]), KernelKind.STAN, line_space)
    with pytest.raises(InputException):
        gp.fit(X, np.array([0.0, np.inf, 1.0]), KernelKind.STAN, line_space)


def test_fit_needs_two_points(line_space):
    with pytest.raises(InputException):
        gp.fit(np.array([[0.5]]), np.array([1.0]), KernelKind.STAN, line_space)


def test_fit_is_deterministic(bench_space, rng):
    X = sample_uniform(bench_space, 10, rng)
    y = test_function_batch(TestFunctionSpec(b=0.1, c=0.4, d=0.7), X)
    config = FitConfig(likelihood_budget=60)
    first = gp.fit(X, y, KernelKind.IMP, bench_space, config)
    second = gp.fit(X, y, KernelKind.IMP, bench_space, config)
    assert np.array_equal(first.params.theta, second.params.theta)
    assert np.array_equal(first.params.rho, second.params.rho)
    assert first.params.eta == second.params.eta
    assert first.likelihood == second.likelihood
    assert np.isfinite(first.likelihood)


def test_fitted_parameters_within_box(bench_space, rng):
    X = sample_uniform(bench_space, 10, rng)
    y = test_function_batch(TestFunctionSpec(b=0.0, c=0.4, d=0.3), X)
    model = gp.fit(X, y, KernelKind.ICO, bench_space, FitConfig(likelihood_budget=60))
    assert np.all((model.params.theta >= 1e-4) & (model.params.theta <= 1e2 * (1 + 1e-12)))
    assert 1e-8 * (1 - 1e-12) <= model.params.eta <= 1e-2 * (1 + 1e-12)
    assert model.sigma2_hat >= 0 and model.sigma2_ri >= 0


def test_interpolation_at_training_points(bench_space, rng):
    X = sample_uniform(bench_space, 10, rng)
    y = test_function_batch(TestFunctionSpec(b=0.1, c=0.4, d=0.7), X)
    params = KernelParams(theta=np.array([10.0, 10.0]), rho=np.zeros(2), eta=1e-10)
    model = gp.build_model(X, y, KernelKind.STAN, bench_space, params)
    mean, _ = gp.predict(model, X)
    assert np.max(np.abs(mean - y)) <= 1e-6


def test_reinterpolated_variance_vanishes_at_training_points(line_space, oracle_design):
    X, y = oracle_design
    params = KernelParams(theta=np.array([3.0]), rho=np.zeros(1), eta=1e-3)
    model = gp.build_model(X, y, KernelKind.STAN, line_space, params)
    _, variance = gp.predict(model, X)
    assert np.all(variance <= 1e-8)

    plain = gp.build_model(X, y, KernelKind.STAN, line_space, params, FitConfig(use_reinterpolation=False))
    assert np.all(gp.predict(plain, X)[1] > 1e-8)


def test_variance_nonnegative(bench_space, rng):
    X = sample_uniform(bench_space, 10, rng)
    y = test_function_batch(TestFunctionSpec(b=0.1, c=0.4, d=0.7), X)
    model = gp.fit(X, y, KernelKind.IMP, bench_space, FitConfig(likelihood_budget=60))
    _, variance = gp.predict(model, rng.random((200, 2)))
    assert np.all(variance >= 0.0)


def test_single_training_point(line_space):
    params = KernelParams(theta=np.array([2.0]), rho=np.zeros(1), eta=1e-8)
    model = gp.build_model(np.array([[0.3]]), np.array([1.7]), KernelKind.STAN, line_space, params, sigma2=1.0)
    probes = np.array([[0.0], [0.3], [0.5], [1.0]])
    mean, variance = gp.predict(model, probes)
    assert np.allclose(mean, 1.7)
    assert variance[1] == pytest.approx(0.0, abs=1e-12)
    assert variance[2] > variance[1]
    assert variance[3] > variance[2]


def test_mean_invariant_under_row_permutation(bench_space, rng):
    X = sample_uniform(bench_space, 8, rng)
    y = test_function_batch(TestFunctionSpec(b=0.1, c=0.4, d=0.7), X)
    params = KernelParams(theta=np.array([3.0, 1.0]), rho=np.array([0.0, 0.6]), eta=1e-6)
    order = rng.permutation(8)
    probes = rng.random((50, 2))
    first = gp.predict(gp.build_model(X, y, KernelKind.IMP, bench_space, params), probes)[0]
    second = gp.predict(gp.build_model(X[order], y[order], KernelKind.IMP, bench_space, params), probes)[0]
    assert np.allclose(first, second, rtol=0, atol=1e-10)


def test_duplicate_point_barely_changes_predictions(bench_space, rng):
    X = np.array([[0.1, 0.1], [0.9, 0.2], [0.5, 0.5], [0.2, 0.8], [0.8, 0.9]])
    y = test_function_batch(TestFunctionSpec(b=0.1, c=0.4, d=0.7), X)
    params = KernelParams(theta=np.array([30.0, 30.0]), rho=np.zeros(2), eta=1e-8)
    probes = rng.random((100, 2))
    base = gp.predict(gp.build_model(X, y, KernelKind.STAN, bench_space, params), probes)[0]
    doubled = gp.predict(
        gp.build_model(np.vstack([X, X[2]]), np.append(y, y[2]), KernelKind.STAN, bench_space, params),
        probes,
    )[0]
    assert np.max(np.abs(base - doubled)) <= 1e-6


@pytest.mark.parametrize("kind", [KernelKind.ARC, KernelKind.ICO_CORRECTED, KernelKind.IMP, KernelKind.IMP_ARC])
def test_inactive_region_constant_along_x2(kind, bench_space, params_for, rng):
    X = sample_uniform(bench_space, 8, rng)
    y = test_function_batch(TestFunctionSpec(b=0.1, c=0.4, d=0.7), X)
    params = params_for(kind, theta=[3.0, 2.0], eta=1e-6)
    model = gp.build_model(X, y, kind, bench_space, params)
    x1 = np.linspace(0.0, 0.4, 9)
    low = gp.predict(model, np.column_stack([x1, np.full(9, 0.05)]))[0]
    high = gp.predict(model, np.column_stack([x1, np.full(9, 0.95)]))[0]
    assert np.array_equal(low, high)


@pytest.mark.slow
def test_imp_learns_neutral_imputation():
    """On b = 0 data the imputed x2 drifts towards the centre 0.5."""
    spec = TestFunctionSpec(b=0.0, c=0.2, d=0.1)
    space = benchmark_space(spec.c)
    fitted = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        X = sample_uniform(space, 30, rng)
        model = gp.fit(X, test_function_batch(spec, X), KernelKind.IMP, space)
        fitted.append(model.params.rho[1])
    assert abs(np.median(fitted) - 0.5) <= 0.15
