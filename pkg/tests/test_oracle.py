import itertools
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orthoreg.errors import ConfigError, SingularDesignError
from orthoreg.oracle import (DiscreteScm, GaussianLocationScm, GaussianScm, discrete_location_scm,
                             gaussian_causal_theta, gaussian_naive_coeffs, gformula_discrete, gformula_monte_carlo,
                             logistic_gaussian_cdf, marginalize_logistic)

FIXTURE = Path(__file__).parent / "fixtures" / "discrete_scm.yaml"


def random_scm(seed, T=2, k=2):
    rng = np.random.default_rng(seed)
    sup = [np.arange(k, dtype=float) for _ in range(T)]
    px, pa = [], []
    shape = ()
    for t in range(T):
        px.append(rng.dirichlet(np.ones(k), size=shape or None).reshape(shape + (k,)))
        pa.append(rng.uniform(0.1, 0.9, shape + (k,)))
        shape += (k, 2)
    return DiscreteScm(tuple(sup), tuple(px), tuple(pa), rng.standard_normal(shape))


# --- Gaussian collider model -----------------------------------------------------

def test_naive_coefficients_formula():
    assert np.allclose(gaussian_naive_coeffs(GaussianScm(0.6, 0.5, 0.5)), (-0.46875, 0.78125, 0.0), atol=1e-15)
    assert np.allclose(gaussian_naive_coeffs(GaussianScm(0.0, 0.3, 0.5)), (0.0, 0.5, 0.0))


@settings(max_examples=40, deadline=None)
@given(rax=st.floats(-0.8, 0.8), rux=st.floats(-0.5, 0.5), rxa=st.floats(-0.9, 0.9),
       b1=st.floats(-2, 2), b2=st.floats(-2, 2))
def test_naive_coefficients_match_covariance_solve(rax, rux, rxa, b1, b2):
    scm = GaussianScm(rax, rxa, rux, (b1, b2))
    S = scm.covariance()
    solve = np.linalg.solve(S[:3, :3], S[:3, 3])
    assert np.allclose(gaussian_naive_coeffs(scm), solve, atol=1e-12, rtol=0)


@settings(max_examples=30, deadline=None)
@given(rax=st.floats(-0.8, 0.8), rux=st.floats(-0.5, 0.5), rxa=st.floats(-0.9, 0.9))
def test_null_graph_causal_theta_is_zero(rax, rux, rxa):
    assert np.allclose(gaussian_causal_theta(GaussianScm(rax, rxa, rux)), (0.0, 0.0), atol=1e-15)


def test_prop1_algebra_example():
    beta1, lam2, _ = gaussian_naive_coeffs(GaussianScm(0.6, 0.5, 0.5))
    assert beta1 + 0.6 * lam2 == pytest.approx(0.0, abs=1e-15)


def test_invalid_correlations():
    with pytest.raises(ConfigError):
        GaussianScm(0.9, 0.5, 0.9)
    with pytest.raises(SingularDesignError):
        gaussian_naive_coeffs(GaussianScm(1.0, 0.5, 0.0))


def test_simulated_covariance_within_four_mc_se():
    scm = GaussianScm(0.6, 0.5, 0.5)
    panel = scm.simulate(1_000_000, np.random.default_rng(0))
    Z = np.column_stack([panel.treatments[:, 0], panel.covariates[1][:, 0], panel.treatments[:, 1], panel.y])
    Z = Z - Z.mean(axis=0)
    S = scm.covariance()
    for i, j in itertools.combinations_with_replacement(range(4), 2):
        prod = Z[:, i] * Z[:, j]
        se = prod.std() / np.sqrt(len(prod))
        assert abs(prod.mean() - S[i, j]) < 4 * se


def test_non_null_theta_matches_interventional_simulation():
    scm = GaussianScm(0.6, 0.5, 0.5, (0.7, -0.4))
    theta = gaussian_causal_theta(scm)
    assert np.allclose(theta, (0.7, -0.4))
    base = gformula_monte_carlo(scm, (0, 0), 400_000, seed=1)
    for k, abar in enumerate([(1, 0), (0, 1)]):
        mc = gformula_monte_carlo(scm, abar, 400_000, seed=1)
        # common random numbers: the difference isolates the effect
        assert abs((mc.estimate - base.estimate) - theta[k]) < 4 * np.hypot(mc.mc_se, base.mc_se)


def test_null_monte_carlo_mean_is_zero():
    mc = gformula_monte_carlo(GaussianScm(0.4, 0.5, 0.5), (1.0, -2.0), 200_000, seed=3)
    assert abs(mc.estimate) < 4 * mc.mc_se


def test_monte_carlo_rejects_nonpositive_n():
    with pytest.raises(ValueError):
        gformula_monte_carlo(GaussianScm(0, 0, 0), (0, 0), 0, seed=0)


def test_monte_carlo_deterministic():
    a = gformula_monte_carlo(GaussianScm(0.4, 0.5, 0.5), (1, 0), 1000, seed=9, chunk_size=300)
    b = gformula_monte_carlo(GaussianScm(0.4, 0.5, 0.5), (1, 0), 1000, seed=9, chunk_size=300)
    assert a.estimate == b.estimate and a.mc_se == b.mc_se


# --- discrete models ---------------------------------------------------------------

def test_constant_outcome():
    scm = random_scm(0).with_outcome(np.full((2, 2, 2, 2), 3.5))
    assert all(gformula_discrete(scm, a) == pytest.approx(3.5) for a in itertools.product((0, 1), repeat=2))


def test_no_causal_pathway():
    base = random_scm(1)
    px2 = np.broadcast_to(np.array([0.3, 0.7]), (2, 2, 2)).copy()
    mu = np.zeros((2, 2, 2, 2)) + np.arange(2)[:, None, None, None] + 2 * np.arange(2)[None, None, :, None]
    scm = DiscreteScm(base.x_support, (base.px[0], px2), base.pa, mu)
    vals = [gformula_discrete(scm, a) for a in itertools.product((0, 1), repeat=2)]
    assert np.allclose(vals, vals[0])


@pytest.mark.parametrize("seed", range(5))
def test_gformula_matches_enumeration(seed):
    scm = random_scm(seed)
    for abar in itertools.product((0, 1), repeat=2):
        total = 0.0
        for x1, x2 in itertools.product(range(2), repeat=2):
            p = scm.px[0][x1] * scm.px[1][x1, abar[0], x2]
            total += p * scm.mu[x1, abar[0], x2, abar[1]]
        assert gformula_discrete(scm, abar) == pytest.approx(total, abs=1e-12)


def test_gformula_rejects_bad_path():
    with pytest.raises(ValueError):
        gformula_discrete(random_scm(0), (0, 2))


def test_discrete_monte_carlo_agrees_with_exact_sum():
    scm = DiscreteScm.from_yaml(FIXTURE)
    for abar in itertools.product((0, 1), repeat=2):
        mc = gformula_monte_carlo(scm, abar, 1_000_000, seed=5)
        assert abs(mc.estimate - gformula_discrete(scm, abar)) < 4 * mc.mc_se


def test_fixture_round_trip():
    scm = DiscreteScm.from_yaml(FIXTURE)
    again = DiscreteScm.from_dict(scm.to_dict())
    assert np.array_equal(again.mu, scm.mu)
    assert scm.T == 2


def test_discrete_validation():
    scm = random_scm(0)
    with pytest.raises(ConfigError):
        DiscreteScm(scm.x_support, (np.array([0.5, 0.6]), scm.px[1]), scm.pa, scm.mu)
    with pytest.raises(ConfigError):
        DiscreteScm(scm.x_support, scm.px, scm.pa, np.zeros(3))


def test_location_scm_residuals_are_noise():
    scm = discrete_location_scm(2, ([0.0, 1.0], [0.5, 0.5]), ([-1.0, 1.0], [0.5, 0.5]), 0.5, 1.0)
    P = scm.joint()
    xt = scm.orthogonalized_covariates()[1]
    assert np.allclose(np.abs(xt[P > 0]), 1.0)


# --- Gaussian location models ------------------------------------------------------

@pytest.mark.parametrize("outcome", ["linear", "loglinear", "probit"])
def test_location_model_causal_mean(outcome):
    scm = GaussianLocationScm(outcome, (0.4, -0.3), (0.5, 0.3), (1.0, 0.8), alpha=0.1)
    mc = gformula_monte_carlo(scm, (1, 1), 400_000, seed=2)
    assert abs(mc.estimate - scm.causal_mean((1, 1))) < 4 * mc.mc_se


def test_location_model_causal_survival():
    scm = GaussianLocationScm("cox", (0.4, -0.3), (0.5, 0.3), (1.0, 0.8), h0=0.2)
    times = np.array([0.5, 2.0, 5.0])
    mc = gformula_monte_carlo(scm, (1, 0), 400_000, seed=2, times=times)
    assert np.all(np.abs(mc.estimate - scm.causal_survival((1, 0), times)) < 4 * mc.mc_se + 1e-12)


# --- logistic marginalization ------------------------------------------------------

def test_logistic_without_noise_is_plain_logistic():
    eta = np.linspace(-4, 4, 9)
    m = marginalize_logistic([1.0], [0.0], [1.0], eta[:, None])
    assert np.allclose(m.curve, 1 / (1 + np.exp(-eta)))


def test_logistic_sup_distance_decreases():
    d = [marginalize_logistic([1.0], [1.0], [np.sqrt(s2)], [[0.0], [1.0]]).sup_distance for s2 in (0, 1, 4, 16)]
    assert all(a > b for a, b in zip(d, d[1:]))


def test_logistic_marginal_matches_monte_carlo():
    rng = np.random.default_rng(0)
    n = 1_000_000
    for eta in (-1.0, 0.5, 2.0):
        draws = (rng.logistic(size=n) - 2.0 * rng.standard_normal(n) <= eta).astype(float)
        se = draws.std() / np.sqrt(n)
        assert abs(draws.mean() - logistic_gaussian_cdf(np.array([eta]), 4.0)[0]) < 3 * se
