import warnings

import numpy as np
import pytest
from scipy import linalg

from spectralkernel import gp
from spectralkernel.errors import NotPositiveDefiniteError
from spectralkernel.models import Matern, SingularMatern, normalize_amplitude

MATERN = normalize_amplitude(Matern(phi=1.0, rho=1.0, nu=0.75))


def test_single_point_covariance():
    sigma = gp.assemble_covariance(MATERN, [3.0], tol=1e-10, nugget=0.2, m=256)
    assert sigma.shape == (1, 1) and sigma[0, 0] == pytest.approx(1.2, abs=1e-10)


def test_normalized_covariance_structure():
    x = np.random.default_rng(0).uniform(0, 5, 60)
    sigma = gp.assemble_covariance(MATERN, x, tol=1e-8, nugget=0.1, m=256)
    assert np.array_equal(sigma, sigma.T)
    np.testing.assert_allclose(np.diag(sigma), 1.1, atol=1e-8)
    off = sigma - np.diag(np.diag(sigma))
    assert np.max(np.abs(off)) <= 1 + 1e-8


def test_pairwise_distances_dedup():
    uniq, inv = gp.pairwise_distances(np.arange(5) * 0.5)
    assert uniq.size == 5
    np.testing.assert_array_equal(uniq[inv], np.abs(np.subtract.outer(np.arange(5), np.arange(5))) * 0.5)


def test_phi_derivative_matrix():
    x = np.linspace(0, 3, 15)
    m = Matern(phi=1.4, rho=0.8, nu=1.2)
    sigma = gp.assemble_covariance(m, x, tol=1e-10, nugget=0.3, m=256)
    d = gp.assemble_covariance_derivative(m, x, "phi", tol=1e-10, m=256)
    np.testing.assert_allclose(d, 2 / 1.4 * (sigma - 0.3 * np.eye(15)), atol=1e-9 * sigma.max())


@pytest.mark.parametrize("param", ["rho", "nu", "alpha"])
def test_derivative_matrix_vs_finite_difference(param):
    model = SingularMatern(phi=1.0, rho=0.5, nu=0.51, alpha=0.1)
    x = np.random.default_rng(3).uniform(0, 1, 12)
    tol = 1e-10
    d = gp.assemble_covariance_derivative(model, x, param, tol=tol, m=4096)
    v = model.params[param]
    h = 1e-5
    up = gp.assemble_covariance(model.with_params(**{param: v + h}), x, tol=1e-12, m=4096)
    dn = gp.assemble_covariance(model.with_params(**{param: v - h}), x, tol=1e-12, m=4096)
    fd = (up - dn) / (2 * h)
    assert np.max(np.abs(d - fd)) <= max(1e-5, 10 * tol) * np.max(np.abs(fd))


def test_log_likelihood_examples():
    ll, _ = gp.log_likelihood(np.eye(1), [0.0])
    assert ll == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-15)
    ll, _ = gp.log_likelihood(np.eye(2), [0.0, 0.0])
    assert ll == pytest.approx(-np.log(2 * np.pi), abs=1e-15)


def test_log_likelihood_dense():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((5, 5))
    sigma = a @ a.T + 5 * np.eye(5)
    y = rng.standard_normal(5)
    ll, chol = gp.log_likelihood(sigma, y)
    ref = -0.5 * (y @ np.linalg.inv(sigma) @ y + np.log(np.linalg.det(sigma)) + 5 * np.log(2 * np.pi))
    assert ll == pytest.approx(ref, abs=1e-12)
    np.testing.assert_allclose(chol @ chol.T, sigma, atol=1e-12)


def test_not_positive_definite_pivot():
    sigma = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 2.0], [0.0, 2.0, 1.0]])
    with pytest.raises(NotPositiveDefiniteError) as info:
        gp.log_likelihood(sigma, np.zeros(3))
    assert info.value.pivot == 2


def test_gradient_vs_finite_difference():
    model = SingularMatern(phi=1.0, rho=0.5, nu=0.51, alpha=0.1)
    rng = np.random.default_rng(2)
    x = np.sort(rng.uniform(0, 1, 50))
    y = gp.sample_path(gp.assemble_covariance(model, x, tol=1e-10, nugget=1e-3, m=4096), seed=2)
    g = gp.loglik_gradient(model, x, y, tol=1e-11, nugget=1e-3, m=4096)
    for j, p in enumerate(model.param_names):
        h = 1e-5 * max(1.0, abs(model.params[p]))

        def ll(v):
            s = gp.assemble_covariance(model.with_params(**{p: v}), x, tol=1e-12, nugget=1e-3, m=4096)
            return gp.log_likelihood(s, y)[0]

        fd = (ll(model.params[p] + h) - ll(model.params[p] - h)) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_profile_phi_stationary():
    x = np.linspace(0, 4, 40)
    base = Matern(phi=1.0, rho=1.0, nu=1.5)
    s0 = gp.assemble_covariance(base, x, tol=1e-10, m=256)
    y = gp.sample_path(s0, seed=5) * 1.7
    phi_hat = np.sqrt(y @ linalg.cho_solve(linalg.cho_factor(s0), y) / x.size)
    g = gp.loglik_gradient(base.with_params(phi=phi_hat), x, y, tol=1e-10, params=["phi"], m=256)
    assert abs(g[0]) <= 1e-6 * x.size


def test_fisher_scale_family_and_symmetry():
    x = np.linspace(0, 4, 30)
    m = Matern(phi=1.3, rho=1.0, nu=1.5)
    fis = gp.expected_fisher(m, x, tol=1e-10, m=256)
    assert fis[0, 0] == pytest.approx(2 * x.size / 1.3**2, rel=1e-8)
    assert np.max(np.abs(fis - fis.T)) <= 1e-12 * np.abs(fis).max()
    assert np.linalg.eigvalsh(fis).min() >= -1e-8 * np.linalg.norm(fis)


def test_fisher_matches_score_covariance():
    x = np.linspace(0, 5, 100)
    m = Matern(phi=1.0, rho=1.0, nu=1.0)
    sigma = gp.assemble_covariance(m, x, tol=1e-10, m=256)
    derivs = [gp.assemble_covariance_derivative(m, x, p, tol=1e-10, m=256) for p in m.param_names]
    fac = linalg.cho_factor(sigma)
    traces = [np.trace(linalg.cho_solve(fac, d)) for d in derivs]
    scores = []
    for seed in range(4000):  # 200 draws leave ~10% noise on the variances
        y = gp.sample_path(sigma, seed)
        a = linalg.cho_solve(fac, y)
        scores.append([0.5 * (a @ d @ a - t) for d, t in zip(derivs, traces)])
    mc = np.cov(np.array(scores).T)
    fis = gp.expected_fisher(m, x, tol=1e-10, m=256)
    assert np.all(np.abs(mc - fis) <= 0.15 * np.abs(fis) + 0.05 * np.sqrt(np.outer(np.diag(fis), np.diag(fis))))


def test_fit_report_contract():
    x = np.arange(150) * 0.05
    sigma = gp.assemble_covariance(MATERN, x, tol=1e-10, m=4096)
    y = gp.sample_path(sigma, seed=11)
    start = MATERN.with_params(rho=1.5, nu=1.1)
    rep = gp.fit_fisher_scoring(start, gp.Dataset(x, y), tol=1e-9, m=4096)
    assert rep.converged and rep.std_ok
    nll = [t["nll"] for t in rep.trace]
    assert all(b <= a for a, b in zip(nll, nll[1:]))
    fresh = -gp.log_likelihood(gp.assemble_covariance(MATERN.with_params(**rep.theta), x, tol=1e-9, m=4096), y)[0]
    assert rep.nll == pytest.approx(fresh, abs=1e-8 * max(1.0, abs(fresh)))
    fis = rep.fisher
    assert np.allclose(fis, fis.T) and np.linalg.eigvalsh(fis).min() >= -1e-8 * np.linalg.norm(fis)
    g = gp.loglik_gradient(MATERN.with_params(**rep.theta), x, y, tol=1e-9, m=4096)
    assert np.linalg.norm(g) <= 1e-5 * abs(rep.nll) or rep.message != "gradient norm below threshold"
    d = rep.to_dict()
    assert set(d["theta"]) == {"phi", "rho", "nu"}


def test_fit_iteration_cap_warns():
    x = np.arange(60) * 0.1
    y = gp.sample_path(gp.assemble_covariance(MATERN, x, tol=1e-9, m=256), seed=1)
    with pytest.warns(RuntimeWarning):
        rep = gp.fit_fisher_scoring(MATERN.with_params(rho=3.0), gp.Dataset(x, y), max_iter=1, m=256)
    assert not rep.converged


def test_fit_rejects_singular_start():
    x = np.array([0.0, 0.0])
    with pytest.raises(NotPositiveDefiniteError):
        gp.fit_fisher_scoring(MATERN, gp.Dataset(x, [1.0, 0.5]), m=256)


def test_nested_singular_fit():
    x = np.arange(120) * 0.05
    sigma = gp.assemble_covariance(MATERN, x, tol=1e-10, m=4096)
    start = SingularMatern(**dict(MATERN.params), alpha=0.2)
    good = 0
    seeds = range(3)
    for seed in seeds:
        y = gp.sample_path(sigma, seed)
        base = gp.fit_fisher_scoring(MATERN, gp.Dataset(x, y), tol=1e-9, m=256)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            # alpha heads to its boundary on a logit scale; a few steps show the trend
            full = gp.fit_fisher_scoring(start, gp.Dataset(x, y), tol=1e-9, m=256, max_iter=6)
        if full.theta["alpha"] <= 0.05 and base.nll - full.nll <= 2:
            good += 1
    assert good > len(seeds) / 2


def test_sample_path():
    z = np.random.default_rng(4).standard_normal(6)
    np.testing.assert_array_equal(gp.sample_path(np.eye(6), seed=4), z)
    s = gp.assemble_covariance(MATERN, np.linspace(0, 2, 20), tol=1e-10, m=256)
    assert np.array_equal(gp.sample_path(s, 9), gp.sample_path(s, 9))


def test_sample_covariance_monte_carlo():
    s = gp.assemble_covariance(MATERN, np.linspace(0, 2, 20), tol=1e-10, m=256)
    chol = np.linalg.cholesky(s)
    draws = np.array([gp.sample_path(s, seed) for seed in range(10_000)])
    emp = draws.T @ draws / draws.shape[0]
    se = np.sqrt((s**2 + np.outer(np.diag(s), np.diag(s))) / draws.shape[0])
    assert np.all(np.abs(emp - s) <= 5 * se)
    assert chol.shape == s.shape


def test_min_eigenvalue():
    assert gp.min_eigenvalue(np.eye(4)) == pytest.approx(1.0)
    assert gp.min_eigenvalue(np.diag([3.0, 1.0, 2.0])) == pytest.approx(1.0, abs=1e-12)


def test_dataset_validation():
    with pytest.raises(ValueError):
        gp.Dataset([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        gp.Dataset([0.0], [1.0], nugget=-1)
