"""Cubic B-spline feature map over the staircase knot grid.

Breakpoints sit on every support point ``{j - eps, j, j + eps}``. The end
breakpoints are repeated four times (clamped knot vector), which gives
``3s + 2`` basis functions.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

ORDER = 4  # cubic
DEGREE = ORDER - 1
DOMAIN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SplineBasis:
    breakpoints: np.ndarray
    knots: np.ndarray
    order: int = ORDER

    @property
    def dim(self) -> int:
        return self.knots.size - self.order

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.knots.tobytes()).hexdigest()[:16]

    def features(self, xs) -> np.ndarray:
        """Design matrix ``Phi(xs)`` of shape ``(n, dim)``."""
        return _design(self, xs, 0)

    def second_derivatives(self, xs) -> np.ndarray:
        return _design(self, xs, 2)


@dataclass(frozen=True, eq=False)
class PenaltyMatrix:
    omega: np.ndarray

    def norm_sq(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(theta @ self.omega @ theta)


def build_basis(s: int, epsilon: float) -> SplineBasis:
    if s < 1:
        raise ValueError(f"s must be >= 1, got {s}")
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    anchors = np.arange(s, dtype=float)[:, None]
    bp = (anchors + np.array([-1.0, 0.0, 1.0]) * epsilon).ravel()
    knots = np.concatenate([np.repeat(bp[0], DEGREE), bp, np.repeat(bp[-1], DEGREE)])
    bp.flags.writeable = False
    knots.flags.writeable = False
    return SplineBasis(bp, knots)


def _check_domain(basis: SplineBasis, xs: np.ndarray) -> np.ndarray:
    lo, hi = basis.domain
    bad = (xs < lo - DOMAIN_TOL) | (xs > hi + DOMAIN_TOL) | ~np.isfinite(xs)
    if np.any(bad):
        raise ValueError(f"x={xs[bad][0]!r} outside spline domain [{lo}, {hi}]")
    return np.clip(xs, lo, hi)


def _bspline_values(t: np.ndarray, xs: np.ndarray, degree: int) -> np.ndarray:
    """All B-splines of ``degree`` on knots ``t`` at ``xs`` (Cox-de Boor)."""
    n_int = t.size - 1
    span = np.searchsorted(t, xs, side="right") - 1
    # The right end of the domain belongs to the last nonempty interval.
    last = np.nonzero(t[1:] > t[:-1])[0][-1]
    span = np.clip(span, 0, last)
    vals = np.zeros((xs.size, n_int))
    vals[np.arange(xs.size), span] = 1.0
    x = xs[:, None]
    for k in range(1, degree + 1):
        left_den = t[k:n_int] - t[:n_int - k]
        right_den = t[k + 1:n_int + 1] - t[1:n_int - k + 1]
        left = np.divide(1.0, left_den, out=np.zeros_like(left_den), where=left_den > 0)
        right = np.divide(1.0, right_den, out=np.zeros_like(right_den), where=right_den > 0)
        cnt = n_int - k
        vals = ((x - t[:cnt]) * left * vals[:, :cnt]
                + (t[k + 1:cnt + k + 1] - x) * right * vals[:, 1:cnt + 1])
    return vals


def _derivative_operator(t: np.ndarray, degree: int) -> np.ndarray:
    """Matrix ``D`` with ``B'_{degree} = B_{degree-1} @ D``.

    Uses ``B'_{i,p} = p/(t_{i+p}-t_i) B_{i,p-1} - p/(t_{i+p+1}-t_{i+1}) B_{i+1,p-1}``.
    """
    n_out = t.size - degree - 1
    D = np.zeros((n_out + 1, n_out))
    for i in range(n_out):
        a = t[i + degree] - t[i]
        b = t[i + degree + 1] - t[i + 1]
        if a > 0:
            D[i, i] += degree / a
        if b > 0:
            D[i + 1, i] -= degree / b
    return D


def _design(basis: SplineBasis, xs, deriv: int) -> np.ndarray:
    xs = _check_domain(basis, np.atleast_1d(np.asarray(xs, dtype=float)))
    t = basis.knots
    p = basis.order - 1
    vals = _bspline_values(t, xs, p - deriv)
    for q in range(p - deriv + 1, p + 1):
        vals = vals @ _derivative_operator(t, q)
    return vals


def eval_features(basis: SplineBasis, x: float) -> np.ndarray:
    return basis.features([x])[0]


def eval_second_derivative(basis: SplineBasis, x: float) -> np.ndarray:
    return basis.second_derivatives([x])[0]


def build_penalty(basis: SplineBasis) -> PenaltyMatrix:
    """Gram matrix of second derivatives, integrated over the domain.

    ``Phi''`` is linear on each knot interval, so Simpson's rule on every
    interval integrates the quadratic products exactly.
    """
    bp = basis.breakpoints
    left, right = bp[:-1], bp[1:]
    h = right - left
    # Phi'' is continuous across simple interior knots, so endpoint values
    # agree with the one-sided limits of each interval.
    L = basis.second_derivatives(left)
    M = basis.second_derivatives(0.5 * (left + right))
    R = basis.second_derivatives(right)
    omega = (np.einsum("k,ki,kj->ij", h / 6, L, L)
             + np.einsum("k,ki,kj->ij", 4 * h / 6, M, M)
             + np.einsum("k,ki,kj->ij", h / 6, R, R))
    omega = 0.5 * (omega + omega.T)
    omega.flags.writeable = False
    return PenaltyMatrix(omega)


def predict(basis: SplineBasis, theta, x):
    """``Phi(x)^T theta`` for a scalar or an array of inputs."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (basis.dim,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({basis.dim},)")
    out = basis.features(x) @ theta
    return float(out[0]) if np.ndim(x) == 0 else out


def affine_coefficients(basis: SplineBasis, slope: float, intercept: float) -> np.ndarray:
    """Coefficients representing ``slope * x + intercept`` (Greville abscissae)."""
    t = basis.knots
    p = basis.order - 1
    greville = np.array([t[i + 1:i + p + 1].mean() for i in range(basis.dim)])
    return slope * greville + intercept
