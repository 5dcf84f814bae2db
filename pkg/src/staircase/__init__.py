"""Robust vs standard training on the convex staircase problem."""

from .distribution import (Dataset, StaircaseParams, SupportAtom, build_weights, f_star,
                           invariance_set, sample_dataset, support)
from .estimators import (EstimatorKind, FittedModel, fit_augmented, fit_robust, fit_standard,
                         model_norm, robust_objective, standard_objective)
from .metrics import (MetricRecord, empirical_mse, empirical_robust_mse, population_mse,
                      population_robust_mse)
from .qp import QpSolution, QuadProgram, SolverConfig, check_kkt, solve_qp
from .rst import PseudoLabeledSet, UnlabeledSet, fit_rst, sample_unlabeled
from .spline import (PenaltyMatrix, SplineBasis, build_basis, build_penalty, eval_features,
                     eval_second_derivative, predict)

__version__ = "0.1.0"
