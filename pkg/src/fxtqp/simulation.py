"""Closed-loop simulation: explicit Euler under the QP controller.

A run executes a phase schedule: each phase names a goal set, a relative
deadline, and phase-specific safety branches layered on top of the global
ones.  Phases advance the moment the goal value drops to the phase's reach
tolerance; deadlines are checked, not waited for.  The trace records every
step and ends with a single outcome.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from fxtqp.constraints import ControlAffineSystem, InputBounds, SetFunction
from fxtqp.controller import SolverFailure, SynthesisParams, synthesize

__all__ = [
    "Phase",
    "PhaseSchedule",
    "TrackSchedule",
    "Outcome",
    "OutcomeKind",
    "Trace",
    "NonFiniteState",
    "step_euler",
    "run",
    "monitor",
    "trace_to_csv",
    "trace_from_csv",
]

_TIME_EPS = 1e-12


class NonFiniteState(RuntimeError):
    """A state component became NaN or infinite during integration."""


class OutcomeKind(Enum):
    ALL_PHASES_MET = "all_phases_met"
    DEADLINE_MISSED = "deadline_missed"
    SAFETY_VIOLATED = "safety_violated"
    SOLVER_FAILURE = "solver_failure"


@dataclass(frozen=True)
class Outcome:
    kind: OutcomeKind
    phase: int | None = None
    t: float | None = None
    branch: str | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.kind is OutcomeKind.ALL_PHASES_MET


@dataclass(frozen=True)
class Phase:
    """One (goal set, deadline) leg of a schedule.

    ``reach_tol`` widens the arrival test to goal value <= reach_tol, for
    goals whose zero-sublevel set has empty interior (exact membership is
    then unreachable on a grid).  ``safe_extra`` holds the phase's own
    safety branches, e.g. the set currently being traversed.
    """

    goal: SetFunction
    deadline: float
    safe_extra: tuple[SetFunction, ...] = ()
    reach_tol: float = 0.0
    label: str = ""

    def __post_init__(self):
        if not self.deadline > 0:
            raise ValueError("phase deadline must be positive")


@dataclass(frozen=True)
class PhaseSchedule:
    """Ordered phases plus safety branches that apply throughout.

    ``horizon``, when set, keeps the simulation running under the last
    phase's sets after every phase has been met (to observe post-reach
    behavior); None stops at the last reach.
    """

    phases: tuple[Phase, ...]
    global_safes: tuple[SetFunction, ...] = ()
    horizon: float | None = None

    def __post_init__(self):
        if not self.phases:
            raise ValueError("schedule needs at least one phase")

    @property
    def tracks(self) -> tuple[tuple[Phase, ...], ...]:
        return (self.phases,)


@dataclass(frozen=True)
class TrackSchedule:
    """Several phase sequences progressing on independent clocks.

    Each track advances the moment its own current goal is met; the
    controller goal at any instant combines the unfinished tracks' current
    goals (all must make progress), and every track's current phase
    contributes its extra safety branches.  Used for multi-agent tours
    where synchronizing arrivals would park the agents head-on.
    """

    tracks: tuple[tuple[Phase, ...], ...]
    global_safes: tuple[SetFunction, ...] = ()
    horizon: float | None = None

    def __post_init__(self):
        if not self.tracks or any(not t for t in self.tracks):
            raise ValueError("every track needs at least one phase")


@dataclass
class Trace:
    """Time-stamped closed-loop record of one run."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    h_goal: np.ndarray
    h_safe: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    strict_cs: np.ndarray
    active_set_size: np.ndarray
    phase: np.ndarray
    safe_names: tuple[str, ...]
    dt: float
    scenario_id: str = ""
    outcome: Outcome | None = None
    reach_times: tuple[float | None, ...] = ()
    track_reach_times: tuple[tuple[float | None, ...], ...] = ()
    disc_warnings: int = 0

    def __len__(self) -> int:
        return self.t.size


def step_euler(sys: ControlAffineSystem, x: np.ndarray, u: np.ndarray,
               dt: float) -> np.ndarray:
    """One explicit Euler step of the plant, disturbance included."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    rate = sys.drift(x) + sys.input_matrix(x) @ np.atleast_1d(u)
    if sys.disturbance is not None:
        rate = rate + np.asarray(sys.disturbance(x), dtype=float).reshape(sys.n)
    x_next = x + dt * rate
    if not np.all(np.isfinite(x_next)):
        raise NonFiniteState(f"non-finite state after step from {x}")
    return x_next


def _joint_goal(goals: Sequence[SetFunction]) -> SetFunction:
    """Sum of positive parts of several goal functions.

    Zero exactly when every goal is met, and its reach-rate row drives all
    unmet goals at once; a max of the goals would drive only the worst one
    per step, starving the rest while their deadlines run.
    """

    def h(x):
        return float(sum(max(0.0, g.value(x)) for g in goals))

    def grad(x):
        total = None
        for g in goals:
            if g.value(x) > 0.0:
                gg = g.gradient(x)
                total = gg.copy() if total is None else total + gg
        if total is None:
            total = np.zeros_like(np.asarray(x, dtype=float))
        return total

    return SetFunction(name="joint_goal", kind=goals[0].kind, h=h, grad_h=grad)


def _safe_column_names(schedule) -> tuple[str, ...]:
    names = [s.name or f"safe{i}" for i, s in enumerate(schedule.global_safes)]
    for j, track in enumerate(schedule.tracks):
        for k in range(len(track[0].safe_extra)):
            names.append(f"phase_extra_{j}_{k}" if len(schedule.tracks) > 1
                         else f"phase_extra_{k}")
    return tuple(names)


def run(sys: ControlAffineSystem, schedule: PhaseSchedule | TrackSchedule,
        bounds: InputBounds, params: SynthesisParams, x0: np.ndarray, dt: float,
        scenario_id: str = "") -> Trace:
    """Close the loop from x0 until the schedule resolves.

    Per step: advance every track whose current goal is met, synthesize the
    input for the combined goal (max over unfinished tracks), record,
    monitor safety, then integrate.  A state with a safe-set value inside
    the Euler-consistency band (10 * dt * the running slope estimate of
    that branch) counts as a discretization warning, not a violation.
    Deterministic: identical inputs give bit-identical traces.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x0, dtype=float).copy()
    tracks = schedule.tracks
    n_tracks = len(tracks)
    lengths = [len(tr) for tr in tracks]
    n_legs = max(lengths)
    safe_names = _safe_column_names(schedule)

    rec_t, rec_x, rec_u = [], [], []
    rec_hg, rec_hs = [], []
    rec_d1, rec_d2, rec_scs, rec_as, rec_phase = [], [], [], [], []
    reach: list[list[float | None]] = [[None] * lengths[j] for j in range(n_tracks)]

    t = 0.0
    idx = [0] * n_tracks
    start = [0.0] * n_tracks
    step = 0
    warm: np.ndarray | None = None
    outcome: Outcome | None = None
    disc_warnings = 0
    prev_hs: np.ndarray | None = None
    max_rate = np.zeros(len(safe_names))

    while outcome is None:
        # advance every track through goals already met
        for j, track in enumerate(tracks):
            while idx[j] < lengths[j]:
                ph = track[idx[j]]
                if ph.goal.value(x) <= ph.reach_tol:
                    reach[j][idx[j]] = t
                    idx[j] += 1
                    start[j] = t
                else:
                    break
        done = all(idx[j] >= lengths[j] for j in range(n_tracks))
        if done and (schedule.horizon is None or t >= schedule.horizon - _TIME_EPS):
            outcome = Outcome(kind=OutcomeKind.ALL_PHASES_MET, t=t)
            break
        current = [tracks[j][min(idx[j], lengths[j] - 1)] for j in range(n_tracks)]
        miss = next((j for j in range(n_tracks) if idx[j] < lengths[j]
                     and t - start[j] > current[j].deadline + _TIME_EPS), None)
        if miss is not None:
            outcome = Outcome(kind=OutcomeKind.DEADLINE_MISSED, phase=idx[miss], t=t,
                              message=f"track {miss} leg {idx[miss]} still unmet "
                                      f"after {current[miss].deadline} s")
            break

        pending = [current[j].goal for j in range(n_tracks) if idx[j] < lengths[j]]
        if not pending:
            pending = [ph.goal for ph in current]
        if len(pending) == 1:
            goal = pending[0]
        else:
            goal = _joint_goal(pending)
        safes = schedule.global_safes + tuple(
            s for ph in current for s in ph.safe_extra)
        try:
            decision = synthesize(sys, goal, safes, bounds, params, x,
                                  warm_start=warm)
        except SolverFailure as exc:
            outcome = Outcome(kind=OutcomeKind.SOLVER_FAILURE, phase=min(idx), t=t,
                              message=str(exc))
            break
        warm = decision.z_star

        hs_vals = np.array([s.value(x) for s in safes])
        rec_t.append(t)
        rec_x.append(x.copy())
        rec_u.append(decision.u.copy())
        rec_hg.append(goal.value(x))
        rec_hs.append(hs_vals)
        rec_d1.append(decision.delta1)
        rec_d2.append(decision.delta2)
        rec_scs.append(decision.strict_cs)
        rec_as.append(len(decision.active_set))
        rec_phase.append(min(min(idx), n_legs - 1))

        if prev_hs is not None and prev_hs.size == hs_vals.size:
            max_rate = np.maximum(max_rate, np.abs(hs_vals - prev_hs) / dt)
        prev_hs = hs_vals
        band = 10.0 * dt * max_rate
        violated = np.nonzero(hs_vals > band + 1e-12)[0]
        if violated.size:
            j = int(violated[np.argmax(hs_vals[violated])])
            outcome = Outcome(kind=OutcomeKind.SAFETY_VIOLATED, phase=min(idx), t=t,
                              branch=safe_names[j],
                              message=f"h_s[{safe_names[j]}] = {hs_vals[j]:.6g}")
            break
        disc_warnings += int(np.count_nonzero(hs_vals > 1e-12))

        try:
            x = step_euler(sys, x, decision.u, dt)
        except NonFiniteState as exc:
            outcome = Outcome(kind=OutcomeKind.SOLVER_FAILURE, phase=min(idx), t=t,
                              message=f"non-finite state: {exc}")
            break
        step += 1
        t = step * dt

    # joint leg completion: the later of the tracks' leg reach times
    joint: list[float | None] = []
    for k in range(n_legs):
        times = [reach[j][k] for j in range(n_tracks) if k < lengths[j]]
        joint.append(None if any(v is None for v in times) else max(times))

    n = sys.n
    m = bounds.m
    return Trace(
        t=np.asarray(rec_t),
        x=np.asarray(rec_x).reshape(len(rec_t), n),
        u=np.asarray(rec_u).reshape(len(rec_t), m),
        h_goal=np.asarray(rec_hg),
        h_safe=np.asarray(rec_hs).reshape(len(rec_t), len(safe_names)),
        delta1=np.asarray(rec_d1),
        delta2=np.asarray(rec_d2),
        strict_cs=np.asarray(rec_scs, dtype=bool),
        active_set_size=np.asarray(rec_as, dtype=int),
        phase=np.asarray(rec_phase, dtype=int),
        safe_names=safe_names,
        dt=dt,
        scenario_id=scenario_id,
        outcome=outcome,
        reach_times=tuple(joint),
        track_reach_times=tuple(tuple(r) for r in reach),
        disc_warnings=disc_warnings,
    )


def monitor(trace: Trace, d_min: float | None = None) -> dict:
    """Summary statistics of a trace, as used by the acceptance suite.

    ``min_separation`` is recovered from a safety branch named
    ``separation`` of the form d_min**2 - distance**2 when ``d_min`` is
    given.  An empty trace yields None statistics.
    """
    if len(trace) == 0:
        return {
            "max_h_per_branch": None,
            "min_margin_per_branch": None,
            "min_separation": None,
            "reach_times": list(trace.reach_times) if trace.reach_times else None,
            "max_abs_u": None,
            "max_delta1": None,
        }
    max_h = {name: float(np.max(trace.h_safe[:, j]))
             for j, name in enumerate(trace.safe_names)}
    summary = {
        "max_h_per_branch": max_h,
        "min_margin_per_branch": {k: -v for k, v in max_h.items()},
        "min_separation": None,
        "reach_times": list(trace.reach_times) if trace.reach_times else None,
        "max_abs_u": [float(v) for v in np.max(np.abs(trace.u), axis=0)],
        "max_delta1": float(np.max(trace.delta1)),
    }
    if d_min is not None and "separation" in max_h:
        summary["min_separation"] = math.sqrt(max(0.0, d_min * d_min - max_h["separation"]))
    return summary


def trace_to_csv(trace: Trace, path) -> None:
    """Write the step records with 17 significant digits (lossless doubles)."""
    n = trace.x.shape[1]
    m = trace.u.shape[1]
    header = (["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)]
              + ["h_goal"] + [f"hs_{name}" for name in trace.safe_names]
              + ["delta1", "delta2", "strict_cs", "active_set_size", "phase"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(len(trace)):
            row = ([f"{trace.t[k]:.17g}"]
                   + [f"{v:.17g}" for v in trace.x[k]]
                   + [f"{v:.17g}" for v in trace.u[k]]
                   + [f"{trace.h_goal[k]:.17g}"]
                   + [f"{v:.17g}" for v in trace.h_safe[k]]
                   + [f"{trace.delta1[k]:.17g}", f"{trace.delta2[k]:.17g}",
                      str(int(trace.strict_cs[k])), str(int(trace.active_set_size[k])),
                      str(int(trace.phase[k]))])
            writer.writerow(row)


def trace_from_csv(path, dt: float | None = None) -> Trace:
    """Re-parse a trace CSV written by :func:`trace_to_csv`.

    Run metadata (outcome, reach times) lives in the summary JSON, not the
    CSV; the returned trace carries the step records only.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.asarray(rows, dtype=float) if rows else np.zeros((0, len(header)))
    cols = {name: j for j, name in enumerate(header)}
    xs = [c for c in header if c.startswith("x") and c[1:].isdigit()]
    us = [c for c in header if c.startswith("u") and c[1:].isdigit()]
    hs = [c for c in header if c.startswith("hs_")]
    if len(rows) >= 2 and dt is None:
        dt = float(data[1, cols["t"]] - data[0, cols["t"]])
    return Trace(
        t=data[:, cols["t"]],
        x=data[:, [cols[c] for c in xs]],
        u=data[:, [cols[c] for c in us]],
        h_goal=data[:, cols["h_goal"]],
        h_safe=data[:, [cols[c] for c in hs]] if hs else np.zeros((len(rows), 0)),
        delta1=data[:, cols["delta1"]],
        delta2=data[:, cols["delta2"]],
        strict_cs=data[:, cols["strict_cs"]].astype(bool),
        active_set_size=data[:, cols["active_set_size"]].astype(int),
        phase=data[:, cols["phase"]].astype(int),
        safe_names=tuple(c[3:] for c in hs),
        dt=dt if dt is not None else 0.0,
    )
