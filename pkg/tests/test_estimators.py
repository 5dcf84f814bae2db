import json

import numpy as np
import pytest

from oracles import robust_subgradient
from staircase.distribution import (Dataset, StaircaseParams, invariance_set, sample_dataset,
                                    singleton_invariance)
from staircase.estimators import (EstimatorKind, FittedModel, RankDeficientError,
                                  augmented_objective, fit_augmented, fit_robust, fit_standard,
                                  model_norm, robust_objective, robust_program,
                                  standard_objective)
from staircase.harness import derive_seed
from staircase.metrics import population_mse
from staircase.qp import SolverConfig, check_kkt, solve_qp
from staircase.spline import affine_coefficients, build_basis, build_penalty


@pytest.fixture(scope="module")
def tiny():
    p = StaircaseParams.create(s=2, s0=2, delta=0.3)
    b = build_basis(p.s, p.epsilon)
    return p, b, build_penalty(b), sample_dataset(p, 8, seed=21)


def standard_gradient(X, ys, omega, lam, theta):
    return 2 * X.T @ (X @ theta - ys) + 2 * lam * omega @ theta


def test_zero_targets_give_zero_theta(basis, penalty):
    data = Dataset(np.array([0.0, 1.0, 2.4]), np.zeros(3))
    np.testing.assert_allclose(fit_standard(basis, penalty, data, 0.1).theta, 0.0, atol=1e-14)


def test_standard_gradient_vanishes(tiny):
    p, b, pen, data = tiny
    model = fit_standard(b, pen, data, 0.05)
    g = standard_gradient(b.features(data.xs), data.ys, pen.omega, 0.05, model.theta)
    assert np.max(np.abs(g)) < 1e-8


def test_huge_lambda_gives_least_squares_line(params, basis, penalty):
    data = sample_dataset(params, 60, seed=4)
    model = fit_standard(basis, penalty, data, 1e8)
    slope, intercept = np.polyfit(data.xs, data.ys, 1)
    xs = np.linspace(*basis.domain, 101)
    np.testing.assert_allclose(model.predict(basis, xs), slope * xs + intercept, atol=1e-3)


def test_lambda_zero_rank_deficient(basis, penalty, params):
    data = sample_dataset(params, 5, seed=0)
    with pytest.raises(RankDeficientError):
        fit_standard(basis, penalty, data, 0.0)
    with pytest.raises(ValueError):
        fit_standard(basis, penalty, data, -1.0)


def test_lambda_zero_full_rank(small_params, small_basis, small_penalty):
    # dense sampling over the domain makes the design full column rank
    xs = np.linspace(*small_basis.domain, 50)
    data = Dataset(xs, np.sin(xs))
    model = fit_standard(small_basis, small_penalty, data, 0.0)
    coef, *_ = np.linalg.lstsq(small_basis.features(xs), np.sin(xs), rcond=None)
    np.testing.assert_allclose(model.theta, coef, atol=1e-9)


def test_singleton_robust_equals_standard(tiny):
    p, b, pen, data = tiny
    for lam in (1e-3, 0.1, 10.0):
        rob = fit_robust(b, pen, data, p, lam, invariance=singleton_invariance)
        std = fit_standard(b, pen, data, lam)
        np.testing.assert_allclose(rob.theta, std.theta, atol=1e-6)


def test_singleton_augmented_equals_standard(tiny):
    p, b, pen, data = tiny
    aug = fit_augmented(b, pen, data, p, 0.1, invariance=singleton_invariance)
    std = fit_standard(b, pen, data, 0.1)
    np.testing.assert_allclose(aug.theta, std.theta, atol=1e-10)


def test_augmented_gradient_vanishes(tiny):
    p, b, pen, data = tiny
    lam = 0.05
    model = fit_augmented(b, pen, data, p, lam)
    pts = invariance_set(p, data.xs)
    X = b.features(pts.ravel())
    ys = np.repeat(data.ys, 3)
    g = 2 * X.T @ (X @ model.theta - ys) / 3 + 2 * lam * pen.omega @ model.theta
    assert np.max(np.abs(g)) < 1e-8


def test_robust_matches_subgradient_oracle():
    rng = np.random.default_rng(1)
    for _ in range(10):
        s = int(rng.integers(1, 4))
        p = StaircaseParams.create(s=s, s0=s, delta=0.3)
        b = build_basis(s, p.epsilon)
        pen = build_penalty(b)
        data = sample_dataset(p, int(rng.integers(3, 11)), int(rng.integers(1 << 30)))
        lam = float(10 ** rng.uniform(-2, 0))
        model = fit_robust(b, pen, data, p, lam)
        ours = robust_objective(model, b, data, p, pen)
        phi3 = b.features(invariance_set(p, data.xs).ravel()).reshape(len(data), 3, b.dim)
        ref, _ = robust_subgradient(phi3, data.ys, pen.omega, lam)
        assert ours == pytest.approx(ref, rel=1e-4)
        assert ours <= ref * (1 + 1e-8)


def test_robust_fit_passes_kkt(params, basis, penalty):
    data = sample_dataset(params, 40, seed=9)
    cfg = SolverConfig()
    for lam in (1e-5, 1e-2, 100.0):
        prog = robust_program(basis, penalty, data.xs, data.ys, params, lam)
        sol = solve_qp(prog, cfg)
        assert sol.converged
        assert check_kkt(prog, sol, 10 * cfg.abs_tol).ok
        assert fit_robust(basis, penalty, data, params, lam).kkt_ok


def test_grouped_program_agrees(params, basis, penalty):
    data = sample_dataset(params, 30, seed=2)
    for lam in (1e-3, 1.0):
        a = solve_qp(robust_program(basis, penalty, data.xs, data.ys, params, lam))
        g = solve_qp(robust_program(basis, penalty, data.xs, data.ys, params, lam, grouped=True))
        np.testing.assert_allclose(a.z[:basis.dim], g.z[:basis.dim], atol=1e-5)
        assert a.objective == pytest.approx(g.objective, rel=1e-7)


def test_minimizer_dominance(params, basis, penalty):
    data = sample_dataset(params, 40, seed=13)
    lam = 0.01
    fits = {"standard": fit_standard(basis, penalty, data, lam),
            "robust": fit_robust(basis, penalty, data, params, lam),
            "augmented": fit_augmented(basis, penalty, data, params, lam)}
    objectives = {
        "standard": lambda m: standard_objective(m, basis, data, penalty),
        "robust": lambda m: robust_objective(m, basis, data, params, penalty),
        "augmented": lambda m: augmented_objective(m, basis, data, params, penalty),
    }
    for kind, obj in objectives.items():
        own = obj(fits[kind])
        for other in fits.values():
            assert own <= obj(other) + 1e-8 * max(1.0, abs(own))


def test_robust_objective_dominates_standard(params, basis, penalty):
    rng = np.random.default_rng(0)
    data = sample_dataset(params, 25, seed=1)
    for _ in range(20):
        m = FittedModel(rng.normal(size=basis.dim), 0.3, "standard", basis.fingerprint)
        diff = (robust_objective(m, basis, data, params, penalty)
                - standard_objective(m, basis, data, penalty))
        assert diff >= -1e-12


def test_zero_model_zero_objectives(params, basis, penalty):
    data = Dataset(np.array([1.0, 2.4]), np.zeros(2))
    m = FittedModel(np.zeros(basis.dim), 1.0, "robust", basis.fingerprint)
    assert standard_objective(m, basis, data, penalty) == 0.0
    assert robust_objective(m, basis, data, params, penalty) == 0.0
    assert augmented_objective(m, basis, data, params, penalty) == 0.0
    assert model_norm(m, penalty) == 0.0


def test_affine_model_has_zero_norm(basis, penalty):
    m = FittedModel(affine_coefficients(basis, -2.0, 0.5), 1.0, "standard", basis.fingerprint)
    assert abs(model_norm(m, penalty)) < 1e-10


def test_norm_non_increasing_in_lambda(params, basis, penalty):
    data = sample_dataset(params, 40, seed=3)
    grid = np.logspace(-5, 2, 10)
    norms = [model_norm(fit_standard(basis, penalty, data, lam), penalty) for lam in grid]
    assert all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(norms, norms[1:]))


def test_augmented_worse_than_standard_at_n40(params, basis, penalty):
    grid = np.logspace(-5, 2, 10)
    std, aug = np.zeros(grid.size), np.zeros(grid.size)
    for t in range(5):
        data = sample_dataset(params, 40, derive_seed(0, 0, 40, t))
        std += [population_mse(fit_standard(basis, penalty, data, l), basis, params) for l in grid]
        aug += [population_mse(fit_augmented(basis, penalty, data, params, l), basis, params)
                for l in grid]
    # trial means at each estimator's best lambda
    assert aug.min() / 5 > std.min() / 5


def test_model_serialization(tiny):
    p, b, pen, data = tiny
    m = fit_standard(b, pen, data, 0.1)
    d = json.loads(m.to_json())
    assert set(d) == {"theta", "lambda", "kind", "basis_fingerprint"}
    again = FittedModel.from_dict(d)
    assert again.theta.tobytes() == m.theta.tobytes()
    assert again.kind is EstimatorKind.STANDARD
    assert again.fingerprint == m.fingerprint


def test_model_validation(basis):
    with pytest.raises(ValueError):
        FittedModel(np.array([np.nan]), 0.1, "standard", "")
    with pytest.raises(ValueError):
        FittedModel(np.zeros(3), -0.1, "standard", "")
    with pytest.raises(ValueError):
        FittedModel(np.zeros(3), 0.1, "bogus", "")
    with pytest.raises(ValueError):
        FittedModel(np.zeros(3), 0.1, "standard", "").predict(basis, [1.0])
