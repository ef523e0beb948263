"""QP-based synthesis of safe controllers with fixed-time reach guarantees."""

from fxtqp.qp import (
    QpProblem,
    QpSolution,
    SolveStatus,
    solve_qp,
    brute_force_solve,
    kkt_residual,
    check_strict_complementarity,
)
from fxtqp.fxts import (
    FxtsGains,
    Regime,
    RegimeKind,
    alpha_from_deadline,
    settling_time_bound,
    settling_time_bound_basic,
    gamma_roots,
    domain_threshold,
    simulate_scalar_v,
)
from fxtqp.constraints import (
    ControlAffineSystem,
    SetFunction,
    SetKind,
    InputBounds,
    lie_derivatives,
    convergence_row,
    safety_row,
    safety_rows,
    input_rows,
    finite_diff_gradient_check,
)
from fxtqp.controller import (
    SynthesisParams,
    ControlDecision,
    SolverFailure,
    assemble,
    synthesize,
    continuity_probe,
)
from fxtqp.simulation import (
    Phase,
    PhaseSchedule,
    TrackSchedule,
    Trace,
    Outcome,
    step_euler,
    run,
    monitor,
    trace_to_csv,
    trace_from_csv,
)

__version__ = "0.1.0"
