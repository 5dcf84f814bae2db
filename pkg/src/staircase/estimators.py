"""Standard, robust, data-augmented and self-trained spline estimators."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .distribution import Dataset, InvarianceFn, StaircaseParams, default_invariance
from .qp import QuadProgram, SolverConfig, check_kkt, solve_qp
from .spline import PenaltyMatrix, SplineBasis


class EstimatorKind(str, Enum):
    STANDARD = "standard"
    ROBUST = "robust"
    AUGMENTED = "augmented"
    RST = "rst"


class RankDeficientError(np.linalg.LinAlgError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message: str, primal_residual: float, dual_residual: float,
                 iterations: int):
        super().__init__(f"{message} (primal={primal_residual:.3e}, "
                         f"dual={dual_residual:.3e}, iterations={iterations})")
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class FittedModel:
    theta: np.ndarray
    lam: float
    kind: EstimatorKind
    basis_fingerprint: str
    # Solver diagnostics, only set for QP-based fits.
    kkt_ok: bool | None = None
    iterations: int = 0

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "kind", EstimatorKind(self.kind))

    @property
    def fingerprint(self) -> str:
        import hashlib
        h = hashlib.sha256(self.theta.tobytes())
        h.update(f"{self.lam!r}|{self.kind.value}|{self.basis_fingerprint}".encode())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "lambda": self.lam,
                "kind": self.kind.value, "basis_fingerprint": self.basis_fingerprint}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "FittedModel":
        return cls(np.asarray(data["theta"], dtype=float), float(data["lambda"]),
                   EstimatorKind(data["kind"]), data.get("basis_fingerprint", ""))

    def predict(self, basis: SplineBasis, xs) -> np.ndarray:
        self._check_basis(basis)
        return basis.features(xs) @ self.theta

    def _check_basis(self, basis: SplineBasis):
        if self.theta.shape != (basis.dim,):
            raise ValueError(f"model has {self.theta.size} coefficients, basis has {basis.dim}")


def _ridge_solve(design: np.ndarray, ys: np.ndarray, weights: np.ndarray,
                 penalty: PenaltyMatrix, lam: float) -> np.ndarray:
    """Solve ``(X'WX + lam * Omega) theta = X'Wy`` by Cholesky."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    XtW = design.T * weights
    normal = XtW @ design + lam * penalty.omega
    rhs = XtW @ ys
    try:
        fac = sla.cho_factor(normal)
    except np.linalg.LinAlgError:
        raise RankDeficientError(
            f"normal matrix is singular at lambda={lam}; use lambda > 0") from None
    # cho_factor accepts numerically singular matrices; catch those too.
    diag = np.abs(np.diag(fac[0]))
    if diag.min() <= 1e-10 * max(diag.max(), 1e-300):
        raise RankDeficientError(f"normal matrix is singular at lambda={lam}; use lambda > 0")
    return sla.cho_solve(fac, rhs)


def fit_standard(basis: SplineBasis, penalty: PenaltyMatrix, data: Dataset,
                 lam: float) -> FittedModel:
    X = basis.features(data.xs)
    theta = _ridge_solve(X, data.ys, np.ones(len(data)), penalty, lam)
    return FittedModel(theta, lam, EstimatorKind.STANDARD, basis.fingerprint)


def fit_augmented(basis: SplineBasis, penalty: PenaltyMatrix, data: Dataset,
                  params: StaircaseParams, lam: float,
                  invariance: InvarianceFn | None = None) -> FittedModel:
    """Average squared loss over the three points of ``B(x)`` for every sample."""
    inv = invariance or default_invariance(params)
    pts = inv(data.xs)
    X = basis.features(pts.ravel())
    ys = np.repeat(data.ys, pts.shape[1])
    w = np.full(ys.size, 1.0 / pts.shape[1])
    theta = _ridge_solve(X, ys, w, penalty, lam)
    return FittedModel(theta, lam, EstimatorKind.AUGMENTED, basis.fingerprint)


def robust_program(basis: SplineBasis, penalty: PenaltyMatrix, xs, ys,
                   params: StaircaseParams, lam: float,
                   invariance: InvarianceFn | None = None,
                   grouped: bool = False) -> QuadProgram:
    """Epigraph QP for the worst-case objective.

    Variables ``(theta, t)`` with ``t_i >= |Phi(x~)'theta - y_i|`` for every
    ``x~`` in ``B(x_i)``; the objective is ``sum t_i^2 + lam theta' Omega theta``.

    With ``grouped=True`` samples sharing the same invariance set share two
    extra variables ``hi_g >= Phi(x~)'theta >= lo_g`` and each sample only
    needs ``t_i >= hi_g - y_i`` and ``t_i >= y_i - lo_g``. Both forms have the
    same optimal ``theta``; the grouped one has far fewer rows.
    """
    inv = invariance or default_invariance(params)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n, d = xs.size, basis.dim
    pts = inv(xs)
    k = pts.shape[1]
    P_theta = 2.0 * lam * sp.csc_matrix(penalty.omega)
    if not grouped:
        Phi = sp.csr_matrix(basis.features(pts.ravel()))  # row i*k + j
        row_sample = np.repeat(np.arange(n), k)
        T = sp.csr_matrix((np.full(n * k, -1.0), (np.arange(n * k), row_sample)),
                          shape=(n * k, n))
        A = sp.vstack([sp.hstack([Phi, T]), sp.hstack([-Phi, T])]).tocsc()
        yk = np.repeat(ys, k)
        b = np.concatenate([yk, -yk])
        P = sp.block_diag([P_theta, 2.0 * sp.identity(n)], format="csc")
        return QuadProgram(P, np.zeros(d + n), A, b)

    groups, group_of = np.unique(pts, axis=0, return_inverse=True)
    group_of = group_of.ravel()
    g = groups.shape[0]
    # variable layout: theta (d) | hi (g) | lo (g) | t (n)
    Phi = sp.csr_matrix(basis.features(groups.ravel()))  # row gi*k + j
    owner = np.repeat(np.arange(g), k)
    sel = sp.csr_matrix((np.ones(g * k), (np.arange(g * k), owner)), shape=(g * k, g))
    Z_gk_g = sp.csr_matrix((g * k, g))
    Z_gk_n = sp.csr_matrix((g * k, n))
    hi_rows = sp.hstack([Phi, -sel, Z_gk_g, Z_gk_n])      # Phi theta - hi <= 0
    lo_rows = sp.hstack([-Phi, Z_gk_g, sel, Z_gk_n])      # lo - Phi theta <= 0
    pick = sp.csr_matrix((np.ones(n), (np.arange(n), group_of)), shape=(n, g))
    Z_n_d = sp.csr_matrix((n, d))
    Z_n_g = sp.csr_matrix((n, g))
    eye_n = sp.identity(n, format="csr")
    t_hi = sp.hstack([Z_n_d, pick, Z_n_g, -eye_n])         # hi - t <= y
    t_lo = sp.hstack([Z_n_d, Z_n_g, -pick, -eye_n])        # -lo - t <= -y
    A = sp.vstack([hi_rows, lo_rows, t_hi, t_lo]).tocsc()
    b = np.concatenate([np.zeros(2 * g * k), ys, -ys])
    P = sp.block_diag([P_theta, sp.csc_matrix((2 * g, 2 * g)), 2.0 * sp.identity(n)],
                      format="csc")
    return QuadProgram(P, np.zeros(d + 2 * g + n), A, b)


def fit_robust(basis: SplineBasis, penalty: PenaltyMatrix, data: Dataset,
               params: StaircaseParams, lam: float, solver_config: SolverConfig | None = None,
               invariance: InvarianceFn | None = None,
               kind: EstimatorKind = EstimatorKind.ROBUST) -> FittedModel:
    cfg = solver_config or SolverConfig()
    prog = robust_program(basis, penalty, data.xs, data.ys, params, lam, invariance)
    sol = solve_qp(prog, cfg)
    if not sol.converged:
        raise SolverError("robust QP did not converge", sol.primal_residual,
                          sol.dual_residual, sol.iterations)
    kkt = check_kkt(prog, sol, 10 * cfg.abs_tol)
    return FittedModel(sol.z[:basis.dim], lam, kind, basis.fingerprint,
                       kkt_ok=kkt.ok, iterations=sol.iterations)


def standard_objective(model: FittedModel, basis: SplineBasis, data: Dataset,
                       penalty: PenaltyMatrix) -> float:
    r = model.predict(basis, data.xs) - data.ys
    return float(r @ r + model.lam * penalty.norm_sq(model.theta))


def robust_losses(model: FittedModel, basis: SplineBasis, xs, ys,
                  params: StaircaseParams, invariance: InvarianceFn | None = None) -> np.ndarray:
    """Per-sample worst-case squared loss over ``B(x_i)``."""
    inv = invariance or default_invariance(params)
    pts = inv(np.asarray(xs, dtype=float))
    preds = model.predict(basis, pts.ravel()).reshape(pts.shape)
    return np.max((preds - np.asarray(ys)[:, None]) ** 2, axis=1)


def robust_objective(model: FittedModel, basis: SplineBasis, data: Dataset,
                     params: StaircaseParams, penalty: PenaltyMatrix,
                     invariance: InvarianceFn | None = None) -> float:
    losses = robust_losses(model, basis, data.xs, data.ys, params, invariance)
    return float(losses.sum() + model.lam * penalty.norm_sq(model.theta))


def augmented_objective(model: FittedModel, basis: SplineBasis, data: Dataset,
                        params: StaircaseParams, penalty: PenaltyMatrix,
                        invariance: InvarianceFn | None = None) -> float:
    inv = invariance or default_invariance(params)
    pts = inv(data.xs)
    preds = model.predict(basis, pts.ravel()).reshape(pts.shape)
    losses = np.mean((preds - data.ys[:, None]) ** 2, axis=1)
    return float(losses.sum() + model.lam * penalty.norm_sq(model.theta))


def model_norm(model: FittedModel, penalty: PenaltyMatrix) -> float:
    """Squared RKHS-style norm ``theta' Omega theta``."""
    if model.theta.shape[0] != penalty.omega.shape[0]:
        raise ValueError("model and penalty dimensions differ")
    return penalty.norm_sq(model.theta)
