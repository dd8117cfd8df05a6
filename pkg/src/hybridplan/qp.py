"""Dense convex QP solver.

Solves  min 1/2 x'Hx + f'x  subject to  A_eq x = b_eq,  A_in x >= b_in,
lower <= x <= upper,  with H symmetric positive definite.

Equality constraints are eliminated through a null-space parameterization;
the reduced problem is solved by a primal active-set method. A feasible
start comes from a phase-1 problem with one artificial slack (min 1/2 t^2
s.t. Gz + t >= h, t >= 0), solved by the same core; its optimum is the
smallest achievable worst-case violation, so feasibility is decided by
comparing it against the feasibility tolerance. Pivoting is deterministic:
the blocking constraint is the first to clip the step (lowest row index on
ties) and the dropped constraint has the most negative multiplier (lowest
row index on ties), so identical problems yield bit-identical solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FEASIBILITY_TOL = 1e-8
KKT_TOL = 1e-6
_SYM_TOL = 1e-10
_REGULARIZATION = 1e-9
_RANK_RCOND = 1e-12
_ZERO_STEP = 1e-11


class QPError(ValueError):
    pass


def _as_matrix(a, cols: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((0, cols))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[1] != cols:
        raise QPError(f"{name} must have {cols} columns, got {a.shape}")
    return a


def _as_vector(a, rows: int, name: str, fill: float) -> np.ndarray:
    if a is None:
        return np.full(rows, fill)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.shape != (rows,):
        raise QPError(f"{name} must have length {rows}, got {a.shape}")
    return a


class QPProblem:
    """Validated problem data. H is symmetrized, regularized by 1e-9 on the
    diagonal, and must be positive definite afterwards."""

    def __init__(self, H, f, A_eq=None, b_eq=None, A_in=None, b_in=None,
                 lower=None, upper=None):
        H = np.asarray(H, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise QPError(f"H must be square, got {H.shape}")
        n = H.shape[0]
        if np.max(np.abs(H - H.T), initial=0.0) > _SYM_TOL:
            raise QPError("H must be symmetric to 1e-10")
        self.H = 0.5 * (H + H.T) + _REGULARIZATION * np.eye(n)
        if np.linalg.eigvalsh(self.H)[0] <= 0.0:
            raise QPError("H must be positive definite after regularization")
        self.n = n
        self.f = _as_vector(f, n, "f", 0.0)
        self.A_eq = _as_matrix(A_eq, n, "A_eq")
        self.b_eq = _as_vector(b_eq, self.A_eq.shape[0], "b_eq", 0.0)
        self.A_in = _as_matrix(A_in, n, "A_in")
        self.b_in = _as_vector(b_in, self.A_in.shape[0], "b_in", 0.0)
        self.lower = _as_vector(lower, n, "lower", -np.inf)
        self.upper = _as_vector(upper, n, "upper", np.inf)
        if np.any(self.lower > self.upper):
            raise QPError("box bounds must satisfy lower <= upper")

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.f @ x)


@dataclass
class QPSolution:
    x: np.ndarray
    status: str  # "optimal" | "infeasible" | "max_iterations"
    kkt_residual: float
    iterations: int


def _kernel(A: np.ndarray, n: int) -> np.ndarray:
    if A.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > max(A.shape) * np.finfo(float).eps * s[0])) if s.size else 0
    return Vt[rank:].T


def _row_rank(A: np.ndarray) -> int:
    if A.shape[0] == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > max(A.shape) * np.finfo(float).eps * s[0])) if s.size else 0


def _active_set(H, f, G, h, z0, max_iter):
    """Primal active-set loop from a feasible-within-tolerance start.

    Handles positive semidefinite H (least-norm subproblem steps) so the
    phase-1 problem can reuse it. Returns (z, working_rows, multipliers,
    iterations, converged).
    """
    z = z0.copy()
    nz = z.size
    m = G.shape[0]
    working: list[int] = []
    if m:
        resid = G @ z - h
        for i in np.nonzero(np.abs(resid) <= 1e-9)[0]:
            trial = working + [int(i)]
            if _row_rank(G[trial]) > len(working):
                working.append(int(i))
    iters = 0
    while iters < max_iter:
        iters += 1
        g = H @ z + f
        GW = G[working] if working else np.zeros((0, nz))
        K = _kernel(GW, nz)
        if K.shape[1] == 0:
            p = np.zeros(nz)
        else:
            Hk = K.T @ H @ K
            gk = K.T @ g
            y = np.linalg.lstsq(Hk, -gk, rcond=None)[0]
            p = K @ y
        if np.max(np.abs(p), initial=0.0) <= _ZERO_STEP:
            if not working:
                return z, [], np.zeros(0), iters, True
            lam = np.linalg.lstsq(GW.T, g, rcond=None)[0]
            worst = float(lam.min())
            if worst >= -1e-9:
                return z, list(working), lam, iters, True
            ties = [working[j] for j in range(len(working)) if lam[j] == worst]
            working.remove(min(ties))
            continue
        alpha = 1.0
        blocking = -1
        if m:
            slopes = G @ p
            slack = G @ z - h
            for i in range(m):
                if i in working or slopes[i] >= -1e-13:
                    continue
                ratio = max(slack[i], 0.0) / (-slopes[i])
                if ratio < alpha or (ratio == alpha and blocking >= 0 and i < blocking):
                    alpha = ratio
                    blocking = i
        z = z + alpha * p
        if blocking >= 0:
            working.append(blocking)
    return z, list(working), None, iters, False


def _phase1(G, h, max_iter):
    """Feasible start for Gz >= h via one artificial slack variable.

    Returns (z, worst_violation, iterations)."""
    m, nz = G.shape
    z0 = np.zeros(nz)
    worst = float(np.max(h - G @ z0, initial=0.0))
    if worst <= FEASIBILITY_TOL:
        return z0, worst, 0
    Ga = np.hstack([np.vstack([G, np.zeros((1, nz))]),
                    np.concatenate([np.ones(m), [1.0]])[:, None]])
    ha = np.concatenate([h, [0.0]])
    Ha = np.zeros((nz + 1, nz + 1))
    Ha[-1, -1] = 1.0
    v0 = np.concatenate([z0, [worst + 1.0]])
    v, _, _, iters, _ = _active_set(Ha, np.zeros(nz + 1), Ga, ha, v0, max_iter)
    return v[:nz], float(max(v[-1], np.max(h - Ga[:m, :nz] @ v[:nz], initial=0.0))), iters


def solve_qp(problem: QPProblem, max_iter: int = 200) -> QPSolution:
    n = problem.n
    H, f = problem.H, problem.f

    # Eliminate equalities: x = x_p + Z z.
    if problem.A_eq.shape[0]:
        x_p = np.linalg.lstsq(problem.A_eq, problem.b_eq, rcond=None)[0]
        if np.max(np.abs(problem.A_eq @ x_p - problem.b_eq), initial=0.0) > FEASIBILITY_TOL:
            return QPSolution(x_p, "infeasible", np.inf, 0)
        Z = _kernel(problem.A_eq, n)
    else:
        x_p = np.zeros(n)
        Z = np.eye(n)

    rows = [problem.A_in]
    rhs = [problem.b_in]
    sources: list[tuple[str, int]] = [("in", i) for i in range(problem.A_in.shape[0])]
    finite_lo = np.nonzero(np.isfinite(problem.lower))[0]
    finite_up = np.nonzero(np.isfinite(problem.upper))[0]
    if finite_lo.size:
        E = np.zeros((finite_lo.size, n))
        E[np.arange(finite_lo.size), finite_lo] = 1.0
        rows.append(E)
        rhs.append(problem.lower[finite_lo])
        sources.extend(("lo", int(i)) for i in finite_lo)
    if finite_up.size:
        E = np.zeros((finite_up.size, n))
        E[np.arange(finite_up.size), finite_up] = -1.0
        rows.append(E)
        rhs.append(-problem.upper[finite_up])
        sources.extend(("up", int(i)) for i in finite_up)
    A_full = np.vstack(rows)
    b_full = np.concatenate(rhs)

    G = A_full @ Z
    h = b_full - A_full @ x_p
    iterations = 0

    if Z.shape[1] == 0:
        z = np.zeros(0)
        if np.max(h, initial=0.0) > FEASIBILITY_TOL:
            return QPSolution(x_p, "infeasible", np.inf, 0)
        working: list[int] = []
        lam_w = np.zeros(0)
        converged = True
    else:
        Hz = Z.T @ H @ Z
        fz = Z.T @ (H @ x_p + f)
        if G.shape[0]:
            z0, worst, it1 = _phase1(G, h, max(200, 10 * (G.shape[0] + Z.shape[1])))
            iterations += it1
            if worst > FEASIBILITY_TOL:
                return QPSolution(x_p + Z @ z0, "infeasible", worst, iterations)
        else:
            z0 = np.zeros(Z.shape[1])
        z, working, lam_w, it2, converged = _active_set(Hz, fz, G, h, z0, max_iter)
        iterations += it2

    x = x_p + Z @ z

    # KKT residual in the original variables.
    lam = np.zeros(A_full.shape[0])
    if converged and len(working):
        lam[np.asarray(working, dtype=int)] = np.maximum(lam_w, 0.0)
    stat = H @ x + f - A_full.T @ lam
    if problem.A_eq.shape[0]:
        nu = np.linalg.lstsq(problem.A_eq.T, stat, rcond=None)[0]
        stat = stat - problem.A_eq.T @ nu
    feas = 0.0
    if problem.A_eq.shape[0]:
        feas = float(np.max(np.abs(problem.A_eq @ x - problem.b_eq), initial=0.0))
    slack = A_full @ x - b_full
    feas = max(feas, float(np.max(-slack, initial=0.0)))
    comp = float(np.max(np.abs(lam * slack), initial=0.0))
    dual = 0.0
    if converged and lam_w is not None and lam_w.size:
        dual = float(max(0.0, -lam_w.min()))
    kkt = max(float(np.max(np.abs(stat), initial=0.0)), comp, dual)

    if converged and feas <= FEASIBILITY_TOL and kkt <= KKT_TOL:
        status = "optimal"
    else:
        status = "max_iterations"
    return QPSolution(x, status, kkt, iterations)
