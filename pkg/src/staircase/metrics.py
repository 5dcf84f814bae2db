"""Population and empirical risk metrics for fitted spline models."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .distribution import (Dataset, InvarianceFn, StaircaseParams, atom_grid, atom_probs,
                           f_star, make_rng)
from .estimators import FittedModel, robust_losses
from .spline import SplineBasis

DEFAULT_MC_SAMPLES = 20_000


@dataclass(frozen=True)
class MetricRecord:
    estimator_kind: str
    n: int
    lam: float
    trial_seed: int
    test_mse: float
    train_mse: float
    gen_gap: float
    robust_train_mse: float
    robust_test_mse: float
    norm: float

    @classmethod
    def columns(cls) -> list[str]:
        # "lambda" is reserved in Python, so the attribute is ``lam``.
        return ["lambda" if f.name == "lam" else f.name for f in fields(cls)]

    def row(self) -> tuple:
        return astuple(self)


def population_mse(model: FittedModel, basis: SplineBasis, params: StaircaseParams) -> float:
    """Exact standard test MSE, summed over the finite support, including noise."""
    xs = atom_grid(params)
    probs = atom_probs(params)
    err = model.predict(basis, xs.ravel()).reshape(xs.shape) - f_star(params, xs)
    return float(np.sum(probs * err ** 2) + params.sigma ** 2)


def excess_mse(model: FittedModel, basis: SplineBasis, params: StaircaseParams) -> float:
    return population_mse(model, basis, params) - params.sigma ** 2


def _class_extremes(model: FittedModel, basis: SplineBasis, params: StaircaseParams):
    """Per stair: largest and smallest prediction error over ``B(j)``."""
    xs = atom_grid(params)
    err = model.predict(basis, xs.ravel()).reshape(xs.shape) - params.m * np.arange(params.s)[:, None]
    return err.max(axis=1), err.min(axis=1)


def population_robust_mse(model: FittedModel, basis: SplineBasis, params: StaircaseParams,
                          mc_samples: int = DEFAULT_MC_SAMPLES, seed: int = 0,
                          noiseless: bool = False) -> float:
    """Robust test MSE ``E max_{x~ in B(x)} (f(x~) - y)^2``.

    All atoms of a stair share ``B(x)`` and the target law, so the expectation
    over ``x`` reduces to the stair weights. The noise expectation is a Monte
    Carlo average with common draws across stairs; it is exact when the noise
    is zero (or ``noiseless=True``).
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    hi, lo = _class_extremes(model, basis, params)
    w = params.w
    if params.sigma == 0 or noiseless:
        return float(w @ np.maximum(hi ** 2, lo ** 2))
    v = params.sigma * make_rng(seed).standard_normal(mc_samples)
    per_class = np.maximum((hi[:, None] - v) ** 2, (lo[:, None] - v) ** 2).mean(axis=1)
    return float(w @ per_class)


def _check_nonempty(data: Dataset):
    if len(data) == 0:
        raise ValueError("empty dataset")


def empirical_mse(model: FittedModel, basis: SplineBasis, data: Dataset) -> float:
    _check_nonempty(data)
    r = model.predict(basis, data.xs) - data.ys
    return float(np.mean(r ** 2))


def empirical_robust_mse(model: FittedModel, basis: SplineBasis, data: Dataset,
                         params: StaircaseParams, invariance: InvarianceFn | None = None) -> float:
    _check_nonempty(data)
    return float(np.mean(robust_losses(model, basis, data.xs, data.ys, params, invariance)))
