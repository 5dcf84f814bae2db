import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from staircase.distribution import StaircaseParams, atom_grid, atom_probs, sample_dataset
from staircase.estimators import FittedModel, fit_robust, fit_standard
from staircase.metrics import (MetricRecord, empirical_mse, empirical_robust_mse, excess_mse,
                               population_mse, population_robust_mse)
from staircase.spline import affine_coefficients, build_basis


def interpolant(params, basis, values):
    """Model that takes ``values`` (shape (s, 3)) at the support atoms."""
    X = basis.features(atom_grid(params).ravel())
    theta, *_ = np.linalg.lstsq(X, np.asarray(values).ravel(), rcond=None)
    return FittedModel(theta, 0.0, "standard", basis.fingerprint)


def f_star_model(params, basis):
    return interpolant(params, basis, params.m * np.repeat(np.arange(params.s)[:, None], 3, 1))


def expected_max_sq(hi, lo, sigma):
    """``E max((hi - sigma v)^2, (lo - sigma v)^2)`` by quadrature, with v ~ N(0, 1)."""
    c = 0.5 * (hi + lo)  # (hi - x)^2 is the larger term for x <= c

    def integrand(x):
        return max((hi - x) ** 2, (lo - x) ** 2) * norm.pdf(x, scale=sigma)
    lo_part, _ = quad(integrand, -np.inf, c, epsabs=1e-13)
    hi_part, _ = quad(integrand, c, np.inf, epsabs=1e-13)
    return lo_part + hi_part


def test_bayes_floor(params, basis):
    m = f_star_model(params, basis)
    assert population_mse(m, basis, params) == pytest.approx(params.sigma ** 2, abs=1e-12)
    assert excess_mse(m, basis, params) == pytest.approx(0.0, abs=1e-12)


def test_zero_slope_zero_model():
    p = StaircaseParams.create(m=0.0, sigma=0.5)
    b = build_basis(p.s, p.epsilon)
    m = FittedModel(np.zeros(b.dim), 0.0, "standard", b.fingerprint)
    assert population_mse(m, b, p) == pytest.approx(0.25, abs=1e-15)


def test_identity_line(params, basis):
    m = FittedModel(affine_coefficients(basis, 1.0, 0.0), 0.0, "standard", basis.fingerprint)
    expected = params.delta * params.epsilon ** 2 + params.sigma ** 2
    assert population_mse(m, basis, params) == pytest.approx(expected, rel=1e-10)


def test_population_mse_at_least_sigma_sq(params, basis):
    rng = np.random.default_rng(0)
    for _ in range(20):
        m = FittedModel(rng.normal(size=basis.dim), 0.0, "standard", basis.fingerprint)
        assert population_mse(m, basis, params) >= params.sigma ** 2


def test_noiseless_robust_metric_is_exact():
    p = StaircaseParams.create(sigma=0.0)
    b = build_basis(p.s, p.epsilon)
    # f* up to interpolation round-off
    assert population_robust_mse(f_star_model(p, b), b, p) == pytest.approx(0.0, abs=1e-20)
    rng = np.random.default_rng(1)
    m = FittedModel(rng.normal(size=b.dim), 0.0, "standard", b.fingerprint)
    pts = atom_grid(p)
    err = (m.predict(b, pts.ravel()).reshape(pts.shape)
           - p.m * np.arange(p.s)[:, None])
    expected = float(np.sum(atom_probs(p) * (err ** 2).max(axis=1, keepdims=True)))
    assert population_robust_mse(m, b, p, seed=1) == pytest.approx(expected, rel=1e-12)
    assert population_robust_mse(m, b, p, seed=2) == population_robust_mse(m, b, p, seed=1)


def test_robust_metric_matches_gaussian_quadrature(params, basis):
    rng = np.random.default_rng(2)
    values = params.m * np.repeat(np.arange(params.s)[:, None], 3, 1) + rng.normal(0, 0.3, (params.s, 3))
    m = interpolant(params, basis, values)
    err = values - params.m * np.arange(params.s)[:, None]
    ref = sum(w * expected_max_sq(e.max(), e.min(), params.sigma) for w, e in zip(params.w, err))
    mc = 20_000
    est = population_robust_mse(m, basis, params, mc_samples=mc, seed=5)
    # generous spread bound for the weighted average of per-stair estimates
    spread = max(err.max() - err.min(), 1.0) ** 2 + 4 * params.sigma ** 2
    assert abs(est - ref) <= 4 * spread / np.sqrt(mc)
    assert est == pytest.approx(ref, rel=0.02)


def test_robust_metric_self_consistency(params, basis):
    rng = np.random.default_rng(3)
    m = FittedModel(affine_coefficients(basis, 1.0, 0.0) + rng.normal(0, 0.05, basis.dim), 0.0,
                    "standard", basis.fingerprint)
    small = population_robust_mse(m, basis, params, mc_samples=2000, seed=1)
    big = population_robust_mse(m, basis, params, mc_samples=20000, seed=2)
    # per-draw spread estimated from a separate run
    draws = np.array([population_robust_mse(m, basis, params, mc_samples=1, seed=k)
                      for k in range(400)])
    assert abs(small - big) <= 4 * draws.std() / np.sqrt(2000)


def test_robust_population_dominates_standard(params, basis):
    rng = np.random.default_rng(4)
    for _ in range(10):
        m = FittedModel(rng.normal(size=basis.dim), 0.0, "standard", basis.fingerprint)
        assert population_robust_mse(m, basis, params) >= population_mse(m, basis, params) - 4e-2
        assert population_robust_mse(m, basis, params, noiseless=True) >= excess_mse(m, basis, params)


def test_empirical_metrics(params, basis, penalty):
    data = sample_dataset(params, 30, seed=1)
    m = fit_standard(basis, penalty, data, 0.01)
    assert empirical_robust_mse(m, basis, data, params) >= empirical_mse(m, basis, data)
    from staircase.distribution import Dataset
    exact = Dataset(data.xs, m.predict(basis, data.xs))
    assert empirical_mse(m, basis, exact) == pytest.approx(0.0, abs=1e-20)
    with pytest.raises(ValueError):
        empirical_mse(m, basis, Dataset(np.zeros(0), np.zeros(0)))
    with pytest.raises(ValueError):
        empirical_robust_mse(m, basis, Dataset(np.zeros(0), np.zeros(0)), params)


def test_empirical_converges_to_population(params, basis, penalty):
    m = fit_standard(basis, penalty, sample_dataset(params, 40, seed=2), 1.0)
    big = sample_dataset(params, 100_000, seed=3)
    sq = (m.predict(basis, big.xs) - big.ys) ** 2
    se = sq.std() / np.sqrt(sq.size)
    assert abs(sq.mean() - population_mse(m, basis, params)) <= 3 * se
    assert empirical_mse(m, basis, big) == pytest.approx(sq.mean(), rel=1e-12)


def test_metric_record_columns():
    cols = MetricRecord.columns()
    assert cols == ["estimator_kind", "n", "lambda", "trial_seed", "test_mse", "train_mse",
                    "gen_gap", "robust_train_mse", "robust_test_mse", "norm"]
    r = MetricRecord("standard", 10, 0.1, 3, 0.5, 0.2, 0.3, 0.4, 0.6, 1.0)
    assert r.row()[2] == 0.1 and len(r.row()) == len(cols)


def test_mc_samples_validation(params, basis):
    m = FittedModel(np.zeros(basis.dim), 0.0, "standard", basis.fingerprint)
    with pytest.raises(ValueError):
        population_robust_mse(m, basis, params, mc_samples=0)
