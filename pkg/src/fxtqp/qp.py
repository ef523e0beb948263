"""Dense convex QP solver with inequality constraints.

Solves

    minimize    0.5 * z'Hz + F'z
    subject to  A z <= b

for small, strictly convex problems (H positive definite).  Two independent
routes are provided: :func:`solve_qp`, a primal active-set method meant for
production use, and :func:`brute_force_solve`, an exhaustive working-set
enumeration used as a test oracle.  Both report duals and the active set so
callers can check KKT conditions and strict complementarity.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import linprog

__all__ = [
    "QpProblem",
    "QpSolution",
    "SolveStatus",
    "KktResidual",
    "solve_qp",
    "brute_force_solve",
    "kkt_residual",
    "check_strict_complementarity",
]

# Absolute tolerances on well-scaled data (see module docs: inputs are
# expected pre-scaled to O(1)-O(1e3)).
FEAS_TOL = 1e-8
DUAL_TOL = 1e-10
STAT_TOL = 1e-8
_SYM_TOL = 1e-10
_RATIO_TIE = 1e-12


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class QpProblem:
    """Data of a strictly convex inequality-constrained QP.

    H must be symmetric positive definite (validated by Cholesky), and the
    constraint data must be dimensionally consistent with it.
    """

    H: np.ndarray
    F: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        F = np.asarray(self.F, dtype=float).ravel()
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float).ravel()
        if A.size == 0:
            A = A.reshape(0, F.size)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        n = F.size
        if H.shape != (n, n):
            raise ValueError(f"H shape {H.shape} inconsistent with F length {n}")
        if A.ndim != 2 or A.shape[1] != n:
            raise ValueError(f"A shape {A.shape} inconsistent with {n} variables")
        if b.shape != (A.shape[0],):
            raise ValueError(f"b length {b.shape} inconsistent with A rows {A.shape[0]}")
        if np.max(np.abs(H - H.T), initial=0.0) > _SYM_TOL:
            raise ValueError("H is not symmetric within tolerance")
        try:
            np.linalg.cholesky(H)
        except np.linalg.LinAlgError as exc:
            raise ValueError("H is not positive definite") from exc

    @property
    def n_z(self) -> int:
        return self.F.size

    @property
    def m_c(self) -> int:
        return self.A.shape[0]

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.H @ z + self.F @ z)


@dataclass(frozen=True)
class QpSolution:
    """Primal/dual answer of a QP solve.

    For ``status == INFEASIBLE`` the ``lambda_star`` field carries a
    Farkas-style certificate: nonnegative row weights y with y'A ~ 0 and
    y'b < 0, obtained from the phase-1 feasibility LP.
    """

    z_star: np.ndarray
    lambda_star: np.ndarray
    active_set: tuple[int, ...]
    objective: float
    status: SolveStatus
    iterations: int = 0


@dataclass(frozen=True)
class KktResidual:
    stationarity: float
    primal_violation: float
    comp_slack: float


def _active_by_value(problem: QpProblem, z: np.ndarray) -> tuple[int, ...]:
    if problem.m_c == 0:
        return ()
    r = problem.b - problem.A @ z
    tol = FEAS_TOL * (1.0 + np.abs(problem.b))
    return tuple(int(i) for i in np.nonzero(r <= tol)[0])


def _feasibility_lp(problem: QpProblem):
    """Minimize the max constraint violation s with A z - s <= b, s >= 0.

    Returns (s_star, z, dual_weights); s_star > 0 certifies infeasibility and
    the LP duals on the constraint rows form the Farkas combination.
    """
    m, n = problem.A.shape
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([problem.A, -np.ones((m, 1))])
    bounds = [(None, None)] * n + [(0.0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=problem.b, bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"phase-1 feasibility LP failed: {res.message}")
    s_star = float(res.x[-1])
    duals = -np.asarray(res.ineqlin.marginals, dtype=float)
    return s_star, res.x[:n].copy(), duals


def _infeasible_solution(problem: QpProblem, z: np.ndarray, duals: np.ndarray,
                         iterations: int = 0) -> QpSolution:
    return QpSolution(
        z_star=z,
        lambda_star=duals,
        active_set=(),
        objective=math.nan,
        status=SolveStatus.INFEASIBLE,
        iterations=iterations,
    )


def solve_qp(problem: QpProblem, warm_start: np.ndarray | None = None,
             bland: bool = False) -> QpSolution:
    """Primal active-set solve of a strictly convex QP.

    The working set is grown by the smallest-index blocking constraint
    (deterministic tie-breaking) and shrunk by the most negative multiplier;
    ``bland=True`` switches the drop rule to smallest index as an
    anti-cycling fallback.  A feasible start is taken from ``warm_start``
    when it satisfies the constraints, from the unconstrained minimizer when
    that is feasible, and from a phase-1 feasibility LP otherwise.

    Constraint rows are equilibrated to unit infinity norm internally (the
    Schur solves go ill-conditioned when row scales mix); the returned duals
    refer to the rows as given.

    Returns a solution with ``status`` OPTIMAL, INFEASIBLE, or
    ITERATION_LIMIT (cycling guard; callers are expected to retry with
    ``bland=True``).
    """
    n, m = problem.n_z, problem.m_c
    H, F = problem.H, problem.F
    row_scale = np.maximum(np.max(np.abs(problem.A), axis=1, initial=0.0), 1e-30) if m else np.zeros(0)
    A = problem.A / row_scale[:, None] if m else problem.A
    b = problem.b / row_scale if m else problem.b
    chol = cho_factor(H, lower=True)
    iterations = 0

    z = None
    if warm_start is not None:
        w = np.asarray(warm_start, dtype=float).ravel()
        if w.size == n and np.all(np.isfinite(w)):
            if m == 0 or np.max(A @ w - b) <= 1e-9:
                z = w.copy()
    if z is None:
        z_uc = cho_solve(chol, -F)
        if m == 0 or np.max(A @ z_uc - b) <= 1e-9:
            z = z_uc
        else:
            s_star, z_lp, duals = _feasibility_lp(problem)
            if s_star > 1e-7:
                return _infeasible_solution(problem, z_lp, duals)
            z = z_lp

    work: list[int] = []
    max_iter = 50 * (m + n)
    lam_work = np.zeros(0)

    while iterations < max_iter:
        iterations += 1
        g = H @ z + F
        if work:
            # null-space step: robust when active rows have mixed scales
            A_w = A[work]
            k = len(work)
            Q, R = np.linalg.qr(A_w.T, mode="complete")
            Z = Q[:, k:]
            if Z.shape[1]:
                red = Z.T @ H @ Z
                y = cho_solve(cho_factor(red, lower=True), -(Z.T @ g))
                p = Z @ y
            else:
                p = np.zeros(n)
            resid_stat = -(H @ p + g)
            try:
                lam_work = np.linalg.solve(R[:k, :k], Q[:, :k].T @ resid_stat)
            except np.linalg.LinAlgError:
                lam_work = np.linalg.lstsq(R[:k, :k], Q[:, :k].T @ resid_stat, rcond=None)[0]
        else:
            lam_work = np.zeros(0)
            p = -cho_solve(chol, g)

        if np.max(np.abs(p), initial=0.0) <= 1e-9 * max(1.0, float(np.max(np.abs(z), initial=0.0))):
            if work:
                neg = [k for k, lv in enumerate(lam_work) if lv < -DUAL_TOL]
                if neg:
                    if bland:
                        drop = min(neg, key=lambda k: work[k])
                    else:
                        drop = min(neg, key=lambda k: (lam_work[k], work[k]))
                    work.pop(drop)
                    continue
            lam = np.zeros(m)
            for k, j in enumerate(work):
                lam[j] = max(0.0, float(lam_work[k])) / row_scale[j]
            return QpSolution(
                z_star=z,
                lambda_star=lam,
                active_set=_active_by_value(problem, z),
                objective=problem.objective(z),
                status=SolveStatus.OPTIMAL,
                iterations=iterations,
            )

        # Ratio test over constraints outside the working set.
        alpha = 1.0
        if m:
            Ap = A @ p
            resid = b - A @ z
            in_work = np.zeros(m, dtype=bool)
            in_work[work] = True
            increasing = (~in_work) & (Ap > 1e-13)
            if np.any(increasing):
                ratios = np.where(increasing, np.maximum(resid, 0.0) / np.where(increasing, Ap, 1.0), np.inf)
                best = float(np.min(ratios))
                if best < 1.0:
                    alpha = best
                    blockers = np.nonzero(increasing & (ratios <= best + _RATIO_TIE))[0]
                    z = z + alpha * p
                    work.append(int(blockers[0]))
                    continue
        z = z + alpha * p

    return QpSolution(
        z_star=z,
        lambda_star=np.zeros(m),
        active_set=_active_by_value(problem, z),
        objective=problem.objective(z),
        status=SolveStatus.ITERATION_LIMIT,
        iterations=iterations,
    )


def brute_force_solve(problem: QpProblem) -> QpSolution:
    """Exhaustive working-set enumeration oracle (exact up to round-off).

    Every independent subset W of at most n_z constraint rows is treated as
    an equality set; candidates that are primal feasible with nonnegative
    multipliers on W are KKT points, hence global optima of the convex
    problem.  The minimum-objective candidate is returned.  Intended for
    m_c <= 16 only.
    """
    n, m = problem.n_z, problem.m_c
    if m > 16:
        raise ValueError("brute_force_solve is restricted to m_c <= 16")
    H, F = problem.H, problem.F
    row_scale = np.maximum(np.max(np.abs(problem.A), axis=1, initial=0.0), 1e-30) if m else np.zeros(0)
    A = problem.A / row_scale[:, None] if m else problem.A
    b = problem.b / row_scale if m else problem.b
    chol = cho_factor(H, lower=True)

    best: tuple[float, np.ndarray, np.ndarray, tuple[int, ...]] | None = None

    def consider(z, lam_full, subset):
        nonlocal best
        if m and np.max(A @ z - b) > 1e-9:
            return
        obj = problem.objective(z)
        if best is None or obj < best[0] - 1e-12:
            best = (obj, z, lam_full, subset)

    z_uc = cho_solve(chol, -F)
    consider(z_uc, np.zeros(m), ())

    h_inv_f = cho_solve(chol, F)
    for k in range(1, min(n, m) + 1):
        for subset in itertools.combinations(range(m), k):
            A_w = A[list(subset)]
            X = cho_solve(chol, A_w.T)
            S = A_w @ X
            try:
                s_chol = cho_factor(S, lower=True)
            except np.linalg.LinAlgError:
                continue    # dependent rows; some independent subset covers this face
            lam_w = cho_solve(s_chol, -(A_w @ h_inv_f) - b[list(subset)])
            if np.any(lam_w < -DUAL_TOL):
                continue
            z = cho_solve(chol, -(F + A_w.T @ lam_w))
            lam_full = np.zeros(m)
            lam_full[list(subset)] = np.maximum(lam_w, 0.0) / row_scale[list(subset)]
            consider(z, lam_full, subset)

    if best is None:
        s_star, z_lp, duals = _feasibility_lp(problem)
        if s_star > 1e-7:
            return _infeasible_solution(problem, z_lp, duals)
        raise RuntimeError("enumeration found no KKT candidate on a feasible problem")

    obj, z, lam, _ = best
    return QpSolution(
        z_star=z,
        lambda_star=lam,
        active_set=_active_by_value(problem, z),
        objective=obj,
        status=SolveStatus.OPTIMAL,
    )


def kkt_residual(problem: QpProblem, solution: QpSolution) -> KktResidual:
    """Infinity-norm KKT residuals of a candidate solution."""
    z, lam = solution.z_star, solution.lambda_star
    stat = problem.H @ z + problem.F
    if problem.m_c:
        stat = stat + problem.A.T @ lam
        slack = problem.A @ z - problem.b
        primal = float(np.max(np.maximum(slack, 0.0), initial=0.0))
        comp = float(np.max(np.abs(lam * slack), initial=0.0))
    else:
        primal = 0.0
        comp = 0.0
    return KktResidual(
        stationarity=float(np.max(np.abs(stat), initial=0.0)),
        primal_violation=primal,
        comp_slack=comp,
    )


def check_strict_complementarity(problem: QpProblem, solution: QpSolution,
                                 tol: float = 1e-6) -> bool:
    """True iff every constraint has either a positive multiplier or slack.

    Degenerate constraints (both the multiplier and the slack at zero) break
    the regularity needed for the solution map to be continuous, so callers
    track this flag along trajectories.
    """
    if solution.status is not SolveStatus.OPTIMAL:
        raise ValueError("strict complementarity is defined for optimal solutions only")
    if problem.m_c == 0:
        return True
    slack = problem.b - problem.A @ solution.z_star
    ok = (solution.lambda_star > tol) | (slack > tol)
    return bool(np.all(ok))
