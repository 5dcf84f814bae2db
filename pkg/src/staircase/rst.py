"""Robust self-training: pseudo-label unlabeled inputs, then fit robustly on the union."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .distribution import (Dataset, InvarianceFn, StaircaseParams, frozen_array, make_rng,
                           sample_inputs)
from .estimators import EstimatorKind, FittedModel, fit_robust, fit_standard
from .qp import SolverConfig
from .spline import PenaltyMatrix, SplineBasis


@dataclass(frozen=True, eq=False)
class UnlabeledSet:
    xs: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "xs", frozen_array(np.atleast_1d(self.xs)))

    def __len__(self) -> int:
        return self.xs.size


@dataclass(frozen=True, eq=False)
class PseudoLabeledSet:
    xs: np.ndarray
    ys: np.ndarray
    source_model: str

    def __post_init__(self):
        object.__setattr__(self, "xs", frozen_array(self.xs))
        object.__setattr__(self, "ys", frozen_array(self.ys))
        if self.xs.shape != self.ys.shape:
            raise ValueError("xs and ys must have equal length")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y_pseudo"])
            for x, y in zip(self.xs, self.ys):
                w.writerow([repr(float(x)), repr(float(y))])


@dataclass(frozen=True, eq=False)
class RSTResult:
    model: FittedModel
    standard_model: FittedModel
    pseudo: PseudoLabeledSet
    augmented: Dataset


def sample_unlabeled(params: StaircaseParams, count: int, seed: int) -> UnlabeledSet:
    """Inputs from the marginal of the data distribution, without targets."""
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    xs = sample_inputs(params, count, make_rng(seed)) if count else np.zeros(0)
    return UnlabeledSet(xs, seed)


def pseudo_label(model: FittedModel, basis: SplineBasis,
                 unlabeled: UnlabeledSet) -> PseudoLabeledSet:
    ys = model.predict(basis, unlabeled.xs) if len(unlabeled) else np.zeros(0)
    return PseudoLabeledSet(unlabeled.xs, ys, model.fingerprint)


def run_rst(basis: SplineBasis, penalty: PenaltyMatrix, labeled: Dataset,
            unlabeled: UnlabeledSet, params: StaircaseParams, lam: float,
            solver_config: SolverConfig | None = None,
            invariance: InvarianceFn | None = None) -> RSTResult:
    """All four steps, keeping the intermediate products for inspection."""
    if len(labeled) == 0:
        raise ValueError("labeled dataset is empty")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    std = fit_standard(basis, penalty, labeled, lam)
    pseudo = pseudo_label(std, basis, unlabeled)
    union = Dataset(np.concatenate([labeled.xs, pseudo.xs]),
                    np.concatenate([labeled.ys, pseudo.ys]),
                    seed=labeled.seed, params_fingerprint=labeled.params_fingerprint)
    model = fit_robust(basis, penalty, union, params, lam, solver_config, invariance,
                       kind=EstimatorKind.RST)
    return RSTResult(model, std, pseudo, union)


def fit_rst(basis: SplineBasis, penalty: PenaltyMatrix, labeled: Dataset,
            unlabeled: UnlabeledSet, params: StaircaseParams, lam: float,
            solver_config: SolverConfig | None = None,
            invariance: InvarianceFn | None = None) -> FittedModel:
    return run_rst(basis, penalty, labeled, unlabeled, params, lam, solver_config,
                   invariance).model
