"""Convex QP solver for ``min 1/2 z'Pz + q'z  s.t.  Az <= b``.

Operator splitting (ADMM) in the style of OSQP: Ruiz equilibration, a
factor-once quasi-definite linear system, over-relaxation, adaptive step size
and a final active-set polish. Works with dense or ``scipy.sparse`` inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass(frozen=True)
class QuadProgram:
    P: object
    q: np.ndarray
    A: object
    b: np.ndarray

    def __post_init__(self):
        P = sp.csc_matrix(self.P, dtype=float)
        q = np.asarray(self.q, dtype=float).ravel()
        n = q.size
        if self.A is None:
            A = sp.csc_matrix((0, n))
        else:
            A = sp.csc_matrix(self.A, dtype=float)
        b = np.asarray(self.b if self.b is not None else [], dtype=float).ravel()
        if P.shape != (n, n):
            raise ValueError(f"P has shape {P.shape}, expected ({n}, {n})")
        if A.shape[1] != n or A.shape[0] != b.size:
            raise ValueError(f"A has shape {A.shape}, incompatible with q ({n}) / b ({b.size})")
        asym = abs(P - P.T).max() if P.nnz else 0.0
        if asym > 1e-10 * max(1.0, abs(P).max() if P.nnz else 0.0):
            raise ValueError("P must be symmetric")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def m(self) -> int:
        return self.b.size

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ (self.P @ z) + self.q @ z)


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 200_000
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho: bool = True
    scaling_iters: int = 10
    polish: bool = True
    check_every: int = 10

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.rho <= 0 or self.sigma <= 0:
            raise ValueError("rho and sigma must be positive")
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class QpSolution:
    z: np.ndarray
    duals: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool
    polished: bool = False


@dataclass(frozen=True)
class KKTReport:
    ok: bool
    stationarity: float
    primal: float
    dual: float
    complementarity: float
    stationarity_tol: float
    complementarity_tol: float

    def __bool__(self) -> bool:
        return self.ok


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def _residuals(prog: QuadProgram, z, y):
    """Unscaled primal violation, stationarity residual and stationarity scale."""
    Pz = prog.P @ z
    Aty = prog.A.T @ y
    primal = _inf_norm(np.maximum(prog.A @ z - prog.b, 0.0))
    dual = _inf_norm(Pz + prog.q + Aty)
    scale = max(_inf_norm(Pz), _inf_norm(Aty), _inf_norm(prog.q))
    return primal, dual, scale


def check_kkt(program: QuadProgram, solution: QpSolution, tol: float) -> KKTReport:
    """Check stationarity, primal/dual feasibility and complementary slackness."""
    z, y = np.asarray(solution.z, float), np.asarray(solution.duals, float)
    if z.shape != (program.n,) or y.shape != (program.m,):
        raise ValueError("solution dimensions do not match the program")
    primal, stat, scale = _residuals(program, z, y)
    slack = program.A @ z - program.b
    comp = _inf_norm(y * slack)
    dual_violation = _inf_norm(np.minimum(y, 0.0))
    stat_tol = tol * max(1.0, scale)
    comp_tol = tol * max(1.0, _inf_norm(y))
    ok = (stat <= stat_tol and primal <= tol and dual_violation <= tol
          and comp <= comp_tol)
    return KKTReport(ok, stat, primal, dual_violation, comp, stat_tol, comp_tol)


class _Scaled:
    """Ruiz-equilibrated copy of the program: ``x = D xs``, rows scaled by ``E``."""

    def __init__(self, prog: QuadProgram, iters: int):
        n, m = prog.n, prog.m
        D = np.ones(n)
        E = np.ones(m)
        P, A = prog.P.copy(), prog.A.copy()
        q = prog.q.copy()
        c = 1.0
        for _ in range(iters):
            col_P = _col_inf(P)
            col_A = _col_inf(A) if m else np.zeros(n)
            d = np.maximum(col_P, col_A)
            d = 1.0 / np.sqrt(np.clip(d, 1e-4, 1e4))
            d[np.maximum(col_P, col_A) == 0] = 1.0
            e = np.ones(m)
            if m:
                row_A = _col_inf(A.T.tocsc())
                e = 1.0 / np.sqrt(np.clip(row_A, 1e-4, 1e4))
                e[row_A == 0] = 1.0
            Dm, Em = sp.diags(d), sp.diags(e)
            P = (Dm @ P @ Dm).tocsc()
            A = (Em @ A @ Dm).tocsc()
            q = d * q
            D *= d
            E *= e
            # cost scaling
            mean_col = np.mean(_col_inf(P)) if n else 0.0
            gamma = 1.0 / np.clip(max(mean_col, _inf_norm(q)), 1e-4, 1e4)
            if not np.isfinite(gamma) or gamma <= 0:
                gamma = 1.0
            P = (gamma * P).tocsc()
            q = gamma * q
            c *= gamma
        self.P, self.A, self.q = P, A, q
        self.b = E * prog.b
        self.D, self.E, self.c = D, E, c


def _col_inf(M: sp.spmatrix) -> np.ndarray:
    M = sp.csc_matrix(M)
    if M.nnz == 0:
        return np.zeros(M.shape[1])
    return np.asarray(abs(M).max(axis=0).todense()).ravel()


class _QuasiDefiniteLU:
    """Sparse LU of a quasi-definite matrix without pivoting.

    Such matrices factor stably in any symmetric order. Rows/columns with many
    nonzeros (the spline coefficients, coupled to every sample) are ordered
    last by a static ascending-degree order; this keeps fill-in bounded where
    generic minimum-degree orderings struggle.
    """

    def __init__(self, K):
        K = sp.csc_matrix(K)
        deg = np.diff(K.indptr)
        self.perm = np.argsort(deg, kind="stable")
        Kp = K[self.perm][:, self.perm].tocsc()
        self._lu = spla.splu(Kp, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                             options=dict(SymmetricMode=True))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        out = np.empty_like(rhs)
        out[self.perm] = self._lu.solve(rhs[self.perm])
        return out


class _LinSys:
    """Factorization of ``P + sigma I + rho A'A`` (positive definite)."""

    def __init__(self, P, A, sigma: float, rho: float):
        n = P.shape[0]
        K = (P + sigma * sp.identity(n, format="csc") + rho * (A.T @ A)).tocsc()
        K.eliminate_zeros()
        self._dense = n <= 200
        if self._dense:
            from scipy.linalg import cho_factor
            self._fac = cho_factor(K.toarray())
        else:
            self._fac = _QuasiDefiniteLU(K)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._dense:
            from scipy.linalg import cho_solve
            return cho_solve(self._fac, rhs)
        return self._fac.solve(rhs)


def solve_qp(program: QuadProgram, config: SolverConfig | None = None) -> QpSolution:
    """Solve the QP; on iteration exhaustion returns ``converged=False`` with the last iterate."""
    cfg = config or SolverConfig()
    prog = program
    n, m = prog.n, prog.m
    S = _Scaled(prog, cfg.scaling_iters)

    if m == 0:
        return _solve_unconstrained(prog, cfg)

    rho, sigma, alpha = cfg.rho, cfg.sigma, cfg.alpha
    lin = _LinSys(S.P, S.A, sigma, rho)
    x = np.zeros(n)
    z = np.minimum(np.zeros(m), S.b)
    y = np.zeros(m)
    At = S.A.T.tocsr()
    best = None
    it = 0
    converged = False
    for it in range(1, cfg.max_iters + 1):
        rhs = sigma * x - S.q + At @ (rho * z - y)
        xt = lin.solve(rhs)
        zt = S.A @ xt
        x = alpha * xt + (1 - alpha) * x
        z_relax = alpha * zt + (1 - alpha) * z
        z_new = np.minimum(z_relax + y / rho, S.b)
        y = y + rho * (z_relax - z_new)
        z = z_new

        if it % cfg.check_every and it != cfg.max_iters:
            continue
        xu, yu = S.D * x, S.E * y / S.c
        Ax = S.A @ x
        prim_s = _inf_norm((Ax - z) / S.E)
        prim_scale = max(_inf_norm(Ax / S.E), _inf_norm(z / S.E))
        primal, dual, dscale = _residuals(prog, xu, yu)
        best = (xu, yu, primal, dual)
        eps_prim = cfg.abs_tol + cfg.rel_tol * prim_scale
        eps_dual = cfg.abs_tol + cfg.rel_tol * dscale
        if primal <= cfg.abs_tol and prim_s <= eps_prim and dual <= eps_dual:
            converged = True
            break
        if cfg.polish and it % (cfg.check_every * 20) == 0:
            pol = _polish(prog, S, x, z, y)
            if pol is not None:
                px, py, pprim, pdual, pscale = pol
                if pprim <= cfg.abs_tol and pdual <= cfg.abs_tol + cfg.rel_tol * pscale:
                    return QpSolution(px, py, prog.objective(px), pprim, pdual, it, True, True)
        if cfg.adaptive_rho and it % (cfg.check_every * 5) == 0:
            Px = S.P @ x
            Aty = At @ y
            r_p = prim_s / max(prim_scale, 1e-30)
            d_scale = max(_inf_norm(Px), _inf_norm(Aty), _inf_norm(S.q), 1e-30)
            r_d = _inf_norm(Px + S.q + Aty) / d_scale
            ratio = np.sqrt(r_p / max(r_d, 1e-30))
            if ratio > 5 or ratio < 0.2:
                rho = float(np.clip(rho * ratio, 1e-6, 1e6))
                lin = _LinSys(S.P, S.A, sigma, rho)

    xu, yu, primal, dual = best
    return QpSolution(xu, yu, prog.objective(xu), primal, dual, it, converged)


def _solve_unconstrained(prog: QuadProgram, cfg: SolverConfig) -> QpSolution:
    n = prog.n
    K = prog.P.toarray() if n <= 2000 else prog.P
    try:
        z = np.linalg.solve(K, -prog.q) if n <= 2000 else spla.spsolve(prog.P.tocsc(), -prog.q)
    except np.linalg.LinAlgError:
        z = np.linalg.lstsq(prog.P.toarray(), -prog.q, rcond=None)[0]
    y = np.zeros(0)
    primal, dual, scale = _residuals(prog, z, y)
    ok = bool(np.all(np.isfinite(z))) and dual <= cfg.abs_tol + cfg.rel_tol * scale
    return QpSolution(z, y, prog.objective(z), primal, dual, 1, ok)


def _polish(prog: QuadProgram, S: _Scaled, x, z, y, delta: float = 1e-7,
            refine: int = 25, rounds: int = 8):
    """Equality-constrained solve on a guessed active set.

    The guess comes from the ADMM iterate and is corrected a few times:
    constraints with negative multipliers are dropped and violated ones added.
    """
    active = S.b - z < y
    n = prog.n
    out = None
    for _ in range(rounds):
        idx = np.nonzero(active)[0]
        sol = _equality_solve(S, idx, delta, refine)
        if sol is None:
            return out
        xs, ya = sol
        viol = (S.A @ xs - S.b) > 1e-12 * max(1.0, _inf_norm(S.b))
        neg = ya < 0
        ys = np.zeros(prog.m)
        ys[idx] = np.maximum(ya, 0.0)
        xu, yu = S.D * xs, S.E * ys / S.c
        out = (xu, yu) + _residuals(prog, xu, yu)
        if not neg.any() and not viol[~active].any():
            break
        active[idx[neg]] = False
        active |= viol
    return out


def _equality_solve(S: _Scaled, idx: np.ndarray, delta: float, refine: int):
    n = S.P.shape[0]
    Aa = S.A[idx]
    k = idx.size
    K = sp.bmat([[S.P, Aa.T], [Aa, None]], format="csc")
    reg = sp.diags(np.concatenate([np.full(n, delta), np.full(k, -delta)]))
    try:
        fac = _QuasiDefiniteLU(K + reg)
    except RuntimeError:
        return None
    rhs = np.concatenate([-S.q, S.b[idx]])
    sol = fac.solve(rhs)
    for _ in range(refine):
        r = rhs - K @ sol
        if _inf_norm(r) < 1e-14 * max(1.0, _inf_norm(rhs)):
            break
        sol = sol + fac.solve(r)
    if not np.all(np.isfinite(sol)):
        return None
    return sol[:n], sol[n:]
