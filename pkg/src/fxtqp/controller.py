"""Pointwise controller: assemble the synthesis QP at a state and solve it.

The decision vector is z = (v, delta1, delta2): the input, the reach-rate
slack, and the invariance slack.  The QP minimizes

    0.5 * (w_u . v_s^2 + w1*delta1^2 + w2*delta2^2) + q1*delta1

over the input-box rows, one reach-rate row for the goal set, and one
invariance row per safe-set branch.  Inputs are scaled component-wise by
their bound magnitude inside the solver (v_s above) so the Hessian stays
well conditioned when physical inputs are large; results are reported in
physical units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fxtqp import qp
from fxtqp.constraints import (
    ControlAffineSystem,
    InputBounds,
    SetFunction,
    convergence_row,
    input_rows,
    safety_rows,
)
from fxtqp.fxts import (
    FxtsGains,
    Regime,
    alpha_from_deadline,
    classify_regime,
    settling_time_bound,
)

__all__ = ["SynthesisParams", "ControlDecision", "SolverFailure", "assemble",
           "synthesize", "continuity_probe", "ContinuityProbeResult"]


class SolverFailure(RuntimeError):
    """The synthesis QP could not be solved; indicates a modeling bug.

    The QP is feasible by construction whenever the state is outside the
    goal set, so this is escalated instead of silently falling back to a
    saturated heuristic input.
    """


@dataclass(frozen=True)
class SynthesisParams:
    """Deadline, derived gains, and objective weights of the synthesis QP.

    ``delta2_freeze_level``, when set, pins delta2 = 0 (via an equality
    encoded as two inequality rows) whenever some safe-set value exceeds the
    level; used by the disturbed cruise-control study.
    """

    T_ud: float
    mu: float
    gains: FxtsGains
    w_u: np.ndarray
    w1: float = 1.0
    w2: float = 1.0
    q1: float = 100.0
    k_margin: float = 0.9
    delta2_freeze_level: float | None = None
    split_safety_branches: bool = True

    def __post_init__(self):
        object.__setattr__(self, "w_u", np.atleast_1d(np.asarray(self.w_u, dtype=float)))
        if not (self.T_ud > 0 and self.mu > 1):
            raise ValueError("need T_ud > 0 and mu > 1")
        expected = self.mu * math.pi / (2.0 * self.T_ud)
        if not (math.isclose(self.gains.alpha1, expected, rel_tol=1e-9)
                and math.isclose(self.gains.alpha2, expected, rel_tol=1e-9)
                and self.gains.mu == self.mu):
            raise ValueError("gains are inconsistent with (T_ud, mu)")
        if np.any(self.w_u <= 0) or self.w1 <= 0 or self.w2 <= 0 or self.q1 <= 0:
            raise ValueError("objective weights must be strictly positive")
        if not (0.0 < self.k_margin < 1.0):
            raise ValueError("k_margin must lie in (0, 1)")

    @classmethod
    def for_deadline(cls, T_ud: float, mu: float, m: int, *, w_u=None,
                     w1: float = 1.0, w2: float = 1.0, q1: float = 100.0,
                     k_margin: float = 0.9,
                     delta2_freeze_level: float | None = None) -> "SynthesisParams":
        if w_u is None:
            w_u = np.ones(m)
        return cls(T_ud=T_ud, mu=mu, gains=alpha_from_deadline(T_ud, mu),
                   w_u=np.asarray(w_u, dtype=float), w1=w1, w2=w2, q1=q1,
                   k_margin=k_margin, delta2_freeze_level=delta2_freeze_level)


@dataclass(frozen=True)
class ControlDecision:
    """Solved control input plus the slack and regularity diagnostics."""

    u: np.ndarray
    delta1: float
    delta2: float
    regime: Regime
    predicted_T: float | None
    duals: np.ndarray
    active_set: tuple[int, ...]
    strict_cs: bool
    objective: float
    z_star: np.ndarray   # solution in solver (input-scaled) coordinates


def _freeze_active(params: SynthesisParams, safes: Sequence[SetFunction],
                   x: np.ndarray) -> bool:
    if params.delta2_freeze_level is None or not safes:
        return False
    return max(s.value(x) for s in safes) > params.delta2_freeze_level


def assemble(sys: ControlAffineSystem, h_g: SetFunction,
             safes: Sequence[SetFunction], bounds: InputBounds,
             params: SynthesisParams, x: np.ndarray) -> qp.QpProblem:
    """Build the synthesis QP at state x, in input-scaled coordinates."""
    m = bounds.m
    scale = bounds.scale()
    rows = []
    rhss = []

    A_u, b_u = input_rows(bounds)
    for r, c in zip(A_u, b_u):
        rows.append(r)
        rhss.append(c)

    row, rhs = convergence_row(sys, h_g, x, params.gains)
    rows.append(row)
    rhss.append(rhs)

    for s in safes:
        for r, c in safety_rows(sys, s, x, per_branch=params.split_safety_branches):
            rows.append(r)
            rhss.append(c)

    if _freeze_active(params, safes, x):
        pin = np.zeros(m + 2)
        pin[m + 1] = 1.0
        rows.append(pin.copy())
        rhss.append(0.0)
        rows.append(-pin)
        rhss.append(0.0)

    A = np.vstack(rows)
    b = np.asarray(rhss, dtype=float)
    # change of variables v = scale * v_s
    A[:, :m] = A[:, :m] * scale[np.newaxis, :]

    H = np.diag(np.concatenate([params.w_u, [params.w1, params.w2]]))
    F = np.zeros(m + 2)
    F[m] = params.q1
    return qp.QpProblem(H=H, F=F, A=A, b=b)


def _slack_completed_start(problem: qp.QpProblem, m: int,
                           v_guess: np.ndarray) -> np.ndarray | None:
    """Feasible point from an input guess by solving for the slacks.

    Mirrors the QP's feasibility argument: clamp the input into its box,
    then pick delta1/delta2 inside the interval each remaining row allows.
    Returns None when the intervals are empty (the phase-1 LP then takes
    over); that does not happen at states where the QP is feasible with the
    given input, e.g. anywhere strictly inside the safe set.
    """
    A, b = problem.A, problem.b
    v = v_guess.copy()
    for i in range(2 * m):
        coef = A[i, : m]
        j = int(np.argmax(np.abs(coef)))
        if coef[j] > 0:
            v[j] = min(v[j], b[i] / coef[j])
        elif coef[j] < 0:
            v[j] = max(v[j], b[i] / coef[j])
    lo = [-math.inf, -math.inf]
    hi = [math.inf, math.inf]
    for i in range(2 * m, A.shape[0]):
        rest = b[i] - float(A[i, : m] @ v)
        for k in (0, 1):
            c = A[i, m + k]
            if c > 1e-12:
                hi[k] = min(hi[k], rest / c)
            elif c < -1e-12:
                lo[k] = max(lo[k], rest / c)
            elif abs(A[i, m]) <= 1e-12 and abs(A[i, m + 1]) <= 1e-12:
                if rest < -1e-10:
                    return None
                break
    if lo[0] > hi[0] + 1e-12 or lo[1] > hi[1] + 1e-12:
        return None
    d1 = min(max(0.0, lo[0]), hi[0])
    d2 = min(max(0.0, lo[1]), hi[1])
    z0 = np.concatenate([v, [d1, d2]])
    if problem.m_c and np.max(A @ z0 - b) > 1e-9:
        return None
    return z0


def synthesize(sys: ControlAffineSystem, h_g: SetFunction,
               safes: Sequence[SetFunction], bounds: InputBounds,
               params: SynthesisParams, x: np.ndarray,
               warm_start: np.ndarray | None = None) -> ControlDecision:
    """Solve the synthesis QP at x and classify the convergence regime.

    ``warm_start`` is a previous solution in solver coordinates (the
    ``z_star`` field of an earlier decision); it can only speed the solve
    up, never change the answer.  Raises :class:`SolverFailure` when the QP
    reports anything but optimality.
    """
    problem = assemble(sys, h_g, safes, bounds, params, x)
    m = bounds.m
    v_guess = (np.asarray(warm_start, dtype=float)[:m]
               if warm_start is not None else np.zeros(m))
    start = _slack_completed_start(problem, m, v_guess)
    solution = qp.solve_qp(problem, warm_start=start)
    if solution.status is qp.SolveStatus.ITERATION_LIMIT:
        solution = qp.solve_qp(problem, warm_start=warm_start, bland=True)
    if solution.status is not qp.SolveStatus.OPTIMAL:
        raise SolverFailure(f"synthesis QP {solution.status.value} at x={np.asarray(x)}")

    m = bounds.m
    z = solution.z_star
    # round-off from the scaled solve may poke past the box by ~1e-8 N
    u = np.clip(z[:m] * bounds.scale(), bounds.lower, bounds.upper)
    delta1 = float(z[m])
    delta2 = float(z[m + 1])
    regime = classify_regime(params.gains, delta1, params.k_margin)
    bound = settling_time_bound(params.gains, max(0.0, delta1), params.k_margin)
    v_now = max(0.0, h_g.value(x))
    predicted_T = bound.T if v_now <= bound.regime.v_max else None
    return ControlDecision(
        u=u,
        delta1=delta1,
        delta2=delta2,
        regime=regime,
        predicted_T=predicted_T,
        duals=solution.lambda_star,
        active_set=solution.active_set,
        strict_cs=qp.check_strict_complementarity(problem, solution),
        objective=solution.objective,
        z_star=z,
    )


@dataclass(frozen=True)
class ContinuityProbeResult:
    max_quotient: float
    quotients: np.ndarray
    nonstrict_count: int


def continuity_probe(sys: ControlAffineSystem, h_g: SetFunction,
                     safes: Sequence[SetFunction], bounds: InputBounds,
                     params: SynthesisParams, x: np.ndarray, radius: float,
                     n_samples: int, seed: int = 0) -> ContinuityProbeResult:
    """Difference quotients ||du|| / ||dx|| of the QP solution map near x.

    Numerical evidence for continuity of the pointwise controller, not a
    proof.  States where strict complementarity fails are counted; spikes in
    the quotient are expected exactly there.
    """
    x = np.asarray(x, dtype=float)
    base = synthesize(sys, h_g, safes, bounds, params, x)
    rng = np.random.default_rng(seed)
    quotients = np.zeros(n_samples)
    nonstrict = 0 if base.strict_cs else 1
    if radius > 0:
        for i in range(n_samples):
            d = rng.normal(size=x.size)
            d *= radius / np.linalg.norm(d)
            probe = synthesize(sys, h_g, safes, bounds, params, x + d)
            quotients[i] = float(np.linalg.norm(probe.u - base.u)) / radius
            if not probe.strict_cs:
                nonstrict += 1
    return ContinuityProbeResult(
        max_quotient=float(np.max(quotients, initial=0.0)),
        quotients=quotients,
        nonstrict_count=nonstrict,
    )
