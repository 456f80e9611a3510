import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize
from scipy.stats import norm

from orthoreg.data import CountingProcessData, CountingProcessRow
from orthoreg.errors import MonotoneLikelihoodError, NonIdentifiableError, SeparationError, SingularDesignError
from orthoreg.regress import (DesignMatrix, breslow_cumhaz, cox_hessian, cox_loglik, cox_score, fit, fit_cox,
                              fit_glm, fit_ols, glm_hessian, glm_loglik, glm_score, predict)


def central_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


def glm_data(family, n=300, seed=0):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
    eta = X @ np.array([0.2, 0.5, -0.4])
    if family == "poisson_log":
        y = rng.poisson(np.exp(eta)).astype(float)
    elif family == "probit":
        y = (rng.random(n) < norm.cdf(eta)).astype(float)
    else:
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    return X, y, rng.uniform(0.5, 2.0, n)


def cox_data(n=120, seed=0, ties=False):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, 2))
    t = rng.exponential(1 / np.exp(Z @ np.array([0.5, -0.3])))
    if ties:
        t = np.ceil(t * 4) / 4
    c = rng.exponential(2.0, n)
    tstart = np.where(rng.random(n) < 0.3, np.minimum(t, c) * 0.4, 0.0)
    return CountingProcessData(np.arange(n), tstart, np.minimum(t, c), (t <= c).astype(float), Z, ("z1", "z2"))


# --- OLS ---------------------------------------------------------------------

def test_ols_interpolates_two_points():
    f = fit_ols(DesignMatrix.from_columns({"x": [0.0, 1.0]}), [1.0, 3.0])
    assert np.allclose(f.coefficients, [1.0, 2.0])


def test_ols_constant_response():
    rng = np.random.default_rng(1)
    D = DesignMatrix.from_columns({"x1": rng.standard_normal(20), "x2": rng.standard_normal(20)})
    f = fit_ols(D, np.full(20, 4.2))
    assert np.allclose(f.coefficients, [4.2, 0, 0], atol=1e-12)


def test_ols_matches_normal_equations():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((50, 3))
    y = rng.standard_normal(50)
    oracle = np.linalg.solve(X.T @ X, X.T @ y)
    assert np.allclose(fit_ols(X, y).coefficients, oracle, rtol=0, atol=1e-10)


def test_ols_residual_orthogonality():
    rng = np.random.default_rng(3)
    D = DesignMatrix.from_columns({f"x{j}": rng.standard_normal(500) for j in range(4)})
    y = rng.standard_normal(500) * 10
    f = fit_ols(D, y)
    r = y - predict(f, D)
    assert np.max(np.abs(D.values.T @ r)) < 1e-8


def test_ols_gaussian_score_finite_difference():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((40, 3))
    y = rng.standard_normal(40)
    w = rng.uniform(0.5, 2, 40)
    b = rng.standard_normal(3)
    ll = lambda beta: -0.5 * np.sum(w * (y - X @ beta) ** 2)  # noqa: E731
    assert rel_err(X.T @ (w * (y - X @ b)), central_grad(ll, b)) < 1e-5


def test_singular_design_names_columns():
    x = np.arange(10.0)
    D = DesignMatrix.from_columns({"x": x, "x2": 2 * x})
    with pytest.raises(SingularDesignError) as e:
        fit_ols(D, x)
    assert set(e.value.columns) & {"x", "x2"}


def test_design_matrix_requires_rows_without_columns():
    with pytest.raises(ValueError):
        DesignMatrix.from_columns({}, intercept=True)
    assert DesignMatrix.from_columns({}, intercept=True, n=3).values.shape == (3, 1)


# --- GLMs ----------------------------------------------------------------------

@pytest.mark.parametrize("family", ["poisson_log", "probit", "logistic"])
def test_glm_score_and_hessian_finite_differences(family):
    X, y, w = glm_data(family)
    b = np.random.default_rng(9).normal(0, 0.3, 3)
    g = glm_score(b, X, y, family, w)
    assert rel_err(g, central_grad(lambda v: glm_loglik(v, X, y, family, w), b)) < 1e-5
    H = glm_hessian(b, X, y, family, w)
    Hfd = np.column_stack([central_grad(lambda v: glm_score(v, X, y, family, w)[j], b) for j in range(3)])
    assert rel_err(H, Hfd) < 1e-4


@pytest.mark.parametrize("family", ["ols", "poisson_log", "probit", "logistic"])
def test_duplicate_equals_weight_two(family):
    X, y, _ = glm_data("logistic" if family == "ols" else family, n=80, seed=5)
    if family == "ols":
        y = y + X[:, 1]
    dup = np.r_[np.arange(80), [3, 17, 42]]
    w = np.ones(80)
    w[[3, 17, 42]] = 2
    a = fit(X[dup], y[dup], family).coefficients
    b = fit(X, y, family, w).coefficients
    assert np.max(np.abs(a - b)) < 1e-10


def test_poisson_two_cell_saturated():
    x = np.array([0, 0, 1, 1.0])
    y = np.array([1, 3, 5, 7.0])
    D = DesignMatrix.from_columns({"x": x})
    f = fit_glm(D, y, "poisson_log")
    assert np.allclose(f.coefficients, [np.log(2), np.log(3)], atol=1e-10)
    assert np.isclose(predict(f, DesignMatrix.from_columns({"x": [0.0]}))[0], 2.0)


def test_probit_separation():
    x = np.array([-2, -1, -0.5, 0.5, 1, 2.0])
    with pytest.raises(SeparationError):
        fit_glm(DesignMatrix.from_columns({"x": x}), (x > 0).astype(float), "probit")


def test_probit_matches_likelihood_oracle():
    rng = np.random.default_rng(6)
    x = rng.standard_normal(200)
    y = (rng.random(200) < norm.cdf(0.3 + 0.8 * x)).astype(float)
    f = fit_glm(DesignMatrix.from_columns({"x": x}), y, "probit")

    def nll(b):
        eta = b[0] + b[1] * x
        return -np.sum(y * norm.logcdf(eta) + (1 - y) * norm.logcdf(-eta))

    # coarse grid, then Nelder-Mead polish from the best grid point
    grid = np.array([(a, b) for a in np.linspace(-1, 1.5, 51) for b in np.linspace(-0.5, 2, 51)])
    start = grid[np.argmin([nll(g) for g in grid])]
    oracle = optimize.minimize(nll, start, method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-12}).x
    assert np.max(np.abs(f.coefficients - oracle)) < 1e-4


def test_probit_predict_in_unit_interval():
    X, y, _ = glm_data("probit")
    f = fit_glm(X, y, "probit")
    p = predict(f, np.column_stack([np.ones(3), [[-50, 50], [0, 0], [50, -50]]]))
    assert np.all((p >= 0) & (p <= 1))


def test_glm_response_validation():
    with pytest.raises(ValueError):
        fit_glm(np.ones((3, 1)), [0, 1, 2], "logistic")


def test_predict_column_mismatch():
    f = fit_ols(DesignMatrix.from_columns({"x": [0.0, 1, 2]}), [1.0, 2, 4])
    with pytest.raises(ValueError, match="mismatch"):
        predict(f, DesignMatrix.from_columns({"z": [0.0]}))


# --- Cox -------------------------------------------------------------------------

@pytest.mark.parametrize("ties", [False, True])
def test_cox_score_and_hessian_finite_differences(ties):
    rows = cox_data(ties=ties)
    w = np.random.default_rng(7).uniform(0.5, 2, len(rows))
    b = np.array([0.3, -0.2])
    g = cox_score(b, rows, w)
    assert rel_err(g, central_grad(lambda v: cox_loglik(v, rows, w), b)) < 1e-5
    H = cox_hessian(b, rows, w)
    Hfd = np.column_stack([central_grad(lambda v: cox_score(v, rows, w)[j], b) for j in range(2)])
    assert rel_err(H, Hfd) < 1e-4


def test_cox_duplicate_equals_weight_two():
    rows = cox_data(ties=True)
    dup = np.r_[np.arange(len(rows)), [0, 5, 9]]
    d = CountingProcessData(rows.subject[dup], rows.tstart[dup], rows.tstop[dup], rows.event[dup], rows.Z[dup])
    w = np.ones(len(rows))
    w[[0, 5, 9]] = 2
    assert np.max(np.abs(fit_cox(d).coefficients - fit_cox(rows, w).coefficients)) < 1e-10


def test_cox_row_split_invariance():
    rows = cox_data(seed=3)
    # split every row at its midpoint; the partial likelihood is unchanged
    mid = (rows.tstart + rows.tstop) / 2
    d = CountingProcessData(np.r_[rows.subject, rows.subject], np.r_[rows.tstart, mid], np.r_[mid, rows.tstop],
                            np.r_[np.zeros(len(rows)), rows.event], np.r_[rows.Z, rows.Z])
    assert np.allclose(fit_cox(d).coefficients, fit_cox(rows).coefficients, atol=1e-10)


def test_cox_grid_oracle():
    rng = np.random.default_rng(8)
    z = (rng.random(100) < 0.5).astype(float)
    t = rng.exponential(1 / np.exp(0.7 * z))
    rows = CountingProcessData(np.arange(100), np.zeros(100), t, np.ones(100), z[:, None])
    f = fit_cox(rows)
    grid = np.linspace(-1, 2.5, 3501)
    best = grid[np.argmax([cox_loglik([g], rows) for g in grid])]
    oracle = optimize.minimize_scalar(lambda b: -cox_loglik([b], rows), bracket=(best - 1e-3, best + 1e-3),
                                      tol=1e-12).x
    assert abs(f.coefficients[0] - oracle) < 1e-4


def test_cox_flat_likelihood():
    rows = CountingProcessData(np.arange(4), np.zeros(4), [1.0, 2, 3, 4], [1, 1, 0, 1], np.ones((4, 1)))
    with pytest.raises(NonIdentifiableError):
        fit_cox(rows)


def test_cox_monotone_likelihood():
    rows = [CountingProcessRow("a", 0.0, 1.0, 1, np.array([1.0])), CountingProcessRow("b", 0.0, 2.0, 1, np.array([0.0]))]
    with pytest.raises(MonotoneLikelihoodError):
        fit_cox(rows)


def test_cox_needs_events():
    rows = CountingProcessData(np.arange(3), np.zeros(3), [1.0, 2, 3], np.zeros(3), [[0.0], [1.0], [0.5]])
    with pytest.raises(ValueError, match="event"):
        fit_cox(rows)


def test_breslow_nelson_aalen_reduction():
    n = 5
    rows = CountingProcessData(np.arange(n), np.zeros(n), [1.0, 2, 2, 2, 2], [1, 0, 0, 0, 0], np.zeros((n, 1)))
    f = fit_cox(cox_data())
    # use a zero-coefficient fit on these rows
    zero = type(f)("cox", ("z1",), np.zeros(1), np.eye(1), 0.0, True, 0, n, np.zeros(1))
    H = breslow_cumhaz(zero, rows)
    assert np.allclose(H.times, [1.0]) and np.allclose(H.jumps, [1 / n])
    assert H(0.5) == 0 and np.isclose(H(1.0), 1 / n)


def test_breslow_no_events_is_zero():
    rows = CountingProcessData(np.arange(2), np.zeros(2), [1.0, 2], [0, 0], [[0.0], [1.0]])
    zero = fit_cox(cox_data())
    zero = type(zero)("cox", ("z1",), np.zeros(1), np.eye(1), 0.0, True, 0, 2, np.zeros(1))
    assert breslow_cumhaz(zero, rows)(10.0) == 0


def test_breslow_martingale_identity():
    rows = cox_data(ties=True, seed=11)
    w = np.random.default_rng(1).uniform(0.5, 2, len(rows))
    f = fit_cox(rows, w)
    H = breslow_cumhaz(f, rows, w)
    risk = np.exp(rows.Z @ f.coefficients)
    expected = np.sum(w * risk * (H(rows.tstop) - H(rows.tstart)))
    assert abs(expected - np.sum(w * rows.event)) < 1e-8


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(0.1, 10))
def test_weight_scale_invariance(seed, c):
    X, y, w = glm_data("logistic", n=120, seed=seed)
    a = fit_glm(X, y, "logistic", w).coefficients
    b = fit_glm(X, y, "logistic", c * w).coefficients
    assert np.allclose(a, b, atol=1e-8)
