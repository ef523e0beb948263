"""Reference scenarios: adaptive cruise control and two-robot waypoint tour.

Both case studies come fully parameterized; the configs below carry every
physical constant, the controller weights, and the simulation defaults, so
sweeps only need to replace fields.  A small synthetic suite of integrator
systems with analytically known properties backs the property tests.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, replace

import numpy as np

from fxtqp.constraints import ControlAffineSystem, InputBounds, SetFunction, SetKind
from fxtqp.controller import SynthesisParams
from fxtqp.simulation import Phase, PhaseSchedule, TrackSchedule, Trace, run

__all__ = [
    "Scenario",
    "AccConfig",
    "TwoRobotConfig",
    "acc_scenario",
    "acc_disturbance_sweep",
    "two_robot_scenario",
    "SyntheticCase",
    "synthetic_suite",
    "scenario_from_id",
]


@dataclass(frozen=True)
class Scenario:
    """Everything a run needs, bundled."""

    scenario_id: str
    sys: ControlAffineSystem
    schedule: PhaseSchedule
    bounds: InputBounds
    params: SynthesisParams
    x0: np.ndarray
    dt: float
    d_min: float | None = None     # separation requirement, if any

    def simulate(self, dt: float | None = None) -> Trace:
        return run(self.sys, self.schedule, self.bounds, self.params, self.x0,
                   dt if dt is not None else self.dt, scenario_id=self.scenario_id)


# ---------------------------------------------------------------------------
# adaptive cruise control
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AccConfig:
    """Follower/lead vehicle problem on a straight road.

    State is (v_f, v_l, D): follower speed, lead speed, inter-vehicle gap.
    The follower tracks the goal speed v_d subject to the headway constraint
    tau_d * v_f <= D and a symmetric force bound of a quarter of its weight.
    The optional disturbance d_delta/M * |v_f - v_d| pushes on the follower
    acceleration; when it is active the invariance slack is pinned to zero
    as soon as the headway margin shrinks past delta2_freeze_at.
    """

    M: float = 1650.0            # follower mass, kg
    grav: float = 9.81           # m/s^2
    v_d: float = 22.0            # goal speed, m/s
    v_f0: float = 18.0           # initial follower speed, m/s
    v_l0: float = 10.0           # initial lead speed, m/s
    D0: float = 150.0            # initial gap, m
    f0: float = 0.1              # drag: f0 + f1 v + f2 v^2, N
    f1: float = 5.0
    f2: float = 0.25
    a_l: float = 0.3             # lead acceleration envelope, fraction of grav
    a_lead: float = 0.0          # actual (constant) lead acceleration, m/s^2
    tau_d: float = 1.8           # desired time headway, s
    T_ud: float = 10.0           # reach deadline for the speed band, s
    mu: float = 5.0
    d_delta: float = 0.0         # disturbance gain, N s/m
    delta2_freeze_at: float = -20.0
    reach_band: float = 0.5      # |v_f - v_d| counted as arrived, m/s
    horizon: float = 20.0        # total simulated time, s
    dt: float = 1e-2
    w_u: float = 1.0             # weight on the scaled input
    w1: float = 0.01             # weight on delta1^2
    w2: float = 2400.0           # weight on delta2^2 (sets how early braking starts)
    q1: float = 4.5              # linear penalty on delta1 (nominal tracking drive)
    q1_disturbed: float = 0.3    # q1 used when d_delta > 0 (freeze-compatible braking)

    def __post_init__(self):
        if min(self.M, self.grav, self.v_d, self.tau_d, self.T_ud) <= 0 or self.mu <= 1:
            raise ValueError("ACC constants must be positive (mu > 1)")
        if self.d_delta < 0:
            raise ValueError("disturbance gain must be nonnegative")
        if abs(self.a_lead) >= self.a_l * self.grav:
            raise ValueError("lead acceleration outside its envelope")

    @property
    def u_max(self) -> float:
        return 0.25 * self.M * self.grav

    def drag(self, v_f: float) -> float:
        return self.f0 + self.f1 * v_f + self.f2 * v_f * v_f


def _acc_system(cfg: AccConfig) -> ControlAffineSystem:
    def f(x):
        v_f, v_l, _ = x
        return np.array([-cfg.drag(v_f) / cfg.M, cfg.a_lead, v_l - v_f])

    def g(x):
        return np.array([[1.0 / cfg.M], [0.0], [0.0]])

    disturbance = None
    if cfg.d_delta > 0:
        def disturbance(x):
            return np.array([cfg.d_delta / cfg.M * abs(x[0] - cfg.v_d), 0.0, 0.0])

    return ControlAffineSystem(n=3, m=1, f=f, g=g, disturbance=disturbance, name="acc")


def acc_goal(cfg: AccConfig) -> SetFunction:
    """Squared speed error; its zero set {v_f = v_d} has empty interior,
    so arrival is judged against the reach band instead of exact membership."""
    return SetFunction(
        name="speed_error",
        kind=SetKind.GOAL,
        h=lambda x: (x[0] - cfg.v_d) ** 2,
        grad_h=lambda x: np.array([2.0 * (x[0] - cfg.v_d), 0.0, 0.0]),
    )


def acc_headway(cfg: AccConfig) -> SetFunction:
    return SetFunction(
        name="headway",
        kind=SetKind.SAFE,
        h=lambda x: cfg.tau_d * x[0] - x[2],
        grad_h=lambda x: np.array([cfg.tau_d, 0.0, -1.0]),
    )


def acc_scenario(cfg: AccConfig | None = None) -> Scenario:
    cfg = cfg or AccConfig()
    # The disturbance study pins delta2 = 0 near the boundary, which is only
    # feasible if the closing speed has been shed well before the pin
    # engages; the reach pressure is dialed down there to brake early enough.
    q1 = cfg.q1 if cfg.d_delta == 0 else cfg.q1_disturbed
    params = SynthesisParams.for_deadline(
        cfg.T_ud, cfg.mu, m=1,
        w_u=[cfg.w_u], w1=cfg.w1, w2=cfg.w2, q1=q1,
        delta2_freeze_level=cfg.delta2_freeze_at if cfg.d_delta > 0 else None,
    )
    schedule = PhaseSchedule(
        phases=(Phase(goal=acc_goal(cfg), deadline=cfg.T_ud,
                      reach_tol=cfg.reach_band ** 2, label="speed_band"),),
        global_safes=(acc_headway(cfg),),
        horizon=cfg.horizon,
    )
    return Scenario(
        scenario_id="acc",
        sys=_acc_system(cfg),
        schedule=schedule,
        bounds=InputBounds(lower=np.array([-cfg.u_max]), upper=np.array([cfg.u_max])),
        params=params,
        x0=np.array([cfg.v_f0, cfg.v_l0, cfg.D0]),
        dt=cfg.dt,
    )


def acc_disturbance_sweep(cfg: AccConfig, d_deltas) -> list[Trace]:
    """One closed-loop run per disturbance gain (gain 0 reproduces nominal)."""
    if any(d < 0 or d > 100 for d in d_deltas):
        raise ValueError("disturbance gains must lie in [0, 100]")
    return [acc_scenario(replace(cfg, d_delta=float(d))).simulate() for d in d_deltas]


# ---------------------------------------------------------------------------
# two-robot waypoint tour
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoRobotConfig:
    """Two planar single-integrators touring eight waypoint sets.

    The workspace is the ring between the square of half-width ``arena`` and
    the disk of radius ``hub_radius``; four corner circles and four edge
    ellipses chain around it with nonempty pairwise overlaps.  Agent 1 tours
    clockwise from the top-left circle, agent 2 counterclockwise from the
    bottom-right one; they cross in the top-right and bottom-left circles,
    where the separation constraint does the work.
    """

    d_m: float = 0.1
    component_bound: float = 7.0
    mu: float = 5.0
    phase_budget: float = 1.0
    arena: float = 2.0
    hub_radius: float = 1.5
    circle_radius: float = 0.5
    ellipse_major: float = 1.2
    ellipse_minor: float = 0.5
    x0_agent1: tuple[float, float] = (-1.5, 1.5)
    x0_agent2: tuple[float, float] = (1.5, -1.5)
    dt: float = 1e-3
    w_u: float = 1.0
    w1: float = 1.0
    w2: float = 10.0     # shared invariance slack; kept cheap so the thin
                         # corridors between walls do not throttle the tour
    q1: float = 100.0

    def __post_init__(self):
        if self.d_m <= 0 or self.component_bound <= 0 or self.phase_budget <= 0:
            raise ValueError("two-robot constants must be positive")


def _agent_slice(agent: int) -> slice:
    return slice(2 * agent, 2 * agent + 2)


def _circle(name: str, kind: SetKind, center, radius: float, agent: int) -> SetFunction:
    c = np.asarray(center, dtype=float)
    sl = _agent_slice(agent)

    def h(x):
        d = x[sl] - c
        return float(d @ d - radius * radius)

    def grad(x):
        out = np.zeros(4)
        out[sl] = 2.0 * (x[sl] - c)
        return out

    return SetFunction(name=name, kind=kind, h=h, grad_h=grad)


def _ellipse(name: str, kind: SetKind, center, semi_x: float, semi_y: float,
             agent: int) -> SetFunction:
    c = np.asarray(center, dtype=float)
    sl = _agent_slice(agent)
    wx, wy = 1.0 / semi_x ** 2, 1.0 / semi_y ** 2

    def h(x):
        d = x[sl] - c
        return float(wx * d[0] ** 2 + wy * d[1] ** 2 - 1.0)

    def grad(x):
        d = x[sl] - c
        out = np.zeros(4)
        out[sl] = np.array([2.0 * wx * d[0], 2.0 * wy * d[1]])
        return out

    return SetFunction(name=name, kind=kind, h=h, grad_h=grad)


def _square_branches(cfg: TwoRobotConfig, agent: int) -> SetFunction:
    sl = _agent_slice(agent)
    a = cfg.arena
    branches = []
    for axis in (0, 1):
        for sign in (1.0, -1.0):
            def h(x, axis=axis, sign=sign):
                return float(sign * x[sl][axis] - a)

            def grad(x, axis=axis, sign=sign):
                out = np.zeros(4)
                out[sl.start + axis] = sign
                return out

            branches.append(SetFunction(name=f"square_a{agent + 1}_{axis}{int(sign > 0)}",
                                        kind=SetKind.SAFE, h=h, grad_h=grad))
    return SetFunction.max_of(f"square_a{agent + 1}", SetKind.SAFE, branches)


def _outside_hub(cfg: TwoRobotConfig, agent: int) -> SetFunction:
    sl = _agent_slice(agent)
    r2 = cfg.hub_radius ** 2

    def h(x):
        d = x[sl]
        return float(r2 - d @ d)

    def grad(x):
        out = np.zeros(4)
        out[sl] = -2.0 * x[sl]
        return out

    return SetFunction(name=f"hub_a{agent + 1}", kind=SetKind.SAFE, h=h, grad_h=grad)


def _separation(cfg: TwoRobotConfig) -> SetFunction:
    d2 = cfg.d_m ** 2

    def h(x):
        d = x[0:2] - x[2:4]
        return float(d2 - d @ d)

    def grad(x):
        d = x[0:2] - x[2:4]
        return np.concatenate([-2.0 * d, 2.0 * d])

    return SetFunction(name="separation", kind=SetKind.SAFE, h=h, grad_h=grad)


def waypoint_sets(cfg: TwoRobotConfig, agent: int, kind: SetKind) -> list[SetFunction]:
    """The eight waypoint sets, indexed 0..7, lifted to the given agent.

    Even indices are the corner circles (top-left first, clockwise), odd
    indices the edge ellipses whose long axis runs along the nearer wall.
    """
    r = cfg.circle_radius
    c, e = cfg.hub_radius, cfg.hub_radius
    maj, mnr = cfg.ellipse_major, cfg.ellipse_minor
    tag = f"a{agent + 1}"
    return [
        _circle(f"S1_{tag}", kind, (-c, c), r, agent),
        _ellipse(f"S2_{tag}", kind, (0.0, e), maj, mnr, agent),
        _circle(f"S3_{tag}", kind, (c, c), r, agent),
        _ellipse(f"S4_{tag}", kind, (e, 0.0), mnr, maj, agent),
        _circle(f"S5_{tag}", kind, (c, -c), r, agent),
        _ellipse(f"S6_{tag}", kind, (0.0, -e), maj, mnr, agent),
        _circle(f"S7_{tag}", kind, (-c, -c), r, agent),
        _ellipse(f"S8_{tag}", kind, (-e, 0.0), mnr, maj, agent),
    ]


# tour orders as waypoint indices (0-based into waypoint_sets)
AGENT1_TOUR = (1, 2, 3, 4, 5, 6, 7, 0)   # from S1: S2 S3 S4 S5 S6 S7 S8 S1
AGENT2_TOUR = (3, 2, 1, 0, 7, 6, 5, 4)   # from S5: S4 S3 S2 S1 S8 S7 S6 S5
AGENT1_START = 0
AGENT2_START = 4


def two_robot_scenario(cfg: TwoRobotConfig | None = None,
                       swap_agents: bool = False) -> Scenario:
    """Stacked 4-state system with one centralized QP per step.

    Each agent runs its own phase track (advancing the moment that agent
    touches its current waypoint) and the controller goal is the max over
    the two current waypoint functions; synchronizing arrivals instead
    parks the agents a separation-distance apart facing crossed goals,
    which deadlocks the pointwise QP.  Each track's current phase keeps the
    agent inside the set it is traversing, which is how the sequential
    always/eventually requirements reduce to reach problems.
    ``swap_agents`` relabels the agents (tours and starts exchanged) for
    symmetry checks.
    """
    cfg = cfg or TwoRobotConfig()

    def f(x):
        return np.zeros(4)

    def g(x):
        return np.eye(4)

    sys = ControlAffineSystem(n=4, m=4, f=f, g=g, name="two_robot")

    goals = [waypoint_sets(cfg, agent, SetKind.GOAL) for agent in (0, 1)]
    stays = [waypoint_sets(cfg, agent, SetKind.SAFE) for agent in (0, 1)]

    tours = [AGENT1_TOUR, AGENT2_TOUR]
    starts = [AGENT1_START, AGENT2_START]
    x0 = np.array([*cfg.x0_agent1, *cfg.x0_agent2])
    if swap_agents:
        tours.reverse()
        starts.reverse()
        x0 = np.array([*cfg.x0_agent2, *cfg.x0_agent1])

    tracks = []
    for agent in (0, 1):
        prev = starts[agent]
        legs = []
        for leg, i in enumerate(tours[agent]):
            legs.append(Phase(goal=goals[agent][i], deadline=cfg.phase_budget,
                              safe_extra=(stays[agent][prev],),
                              label=f"a{agent + 1}_leg{leg}"))
            prev = i
        tracks.append(tuple(legs))

    schedule = TrackSchedule(
        tracks=tuple(tracks),
        global_safes=(
            _square_branches(cfg, 0),
            _square_branches(cfg, 1),
            _outside_hub(cfg, 0),
            _outside_hub(cfg, 1),
            _separation(cfg),
        ),
        horizon=None,
    )
    ub = cfg.component_bound
    params = SynthesisParams.for_deadline(
        cfg.phase_budget, cfg.mu, m=4,
        w_u=[cfg.w_u] * 4, w1=cfg.w1, w2=cfg.w2, q1=cfg.q1,
    )
    return Scenario(
        scenario_id="two-robot",
        sys=sys,
        schedule=schedule,
        bounds=InputBounds(lower=-ub * np.ones(4), upper=ub * np.ones(4)),
        params=params,
        x0=x0,
        dt=cfg.dt,
        d_min=cfg.d_m,
    )


# ---------------------------------------------------------------------------
# synthetic systems for property tests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticCase:
    scenario: Scenario
    description: str


def _integrator(n: int) -> ControlAffineSystem:
    return ControlAffineSystem(n=n, m=n, f=lambda x: np.zeros(n),
                               g=lambda x: np.eye(n), name=f"integrator{n}d")


def synthetic_suite() -> list[SyntheticCase]:
    """Small systems with known behavior: a 1-D and a 2-D integrator, and a
    fully actuated nonlinear system whose safe set admits an inward input by
    construction."""
    cases = []

    goal_1d = SetFunction(name="ball1d", kind=SetKind.GOAL,
                          h=lambda x: float(x[0] ** 2 - 0.01),
                          grad_h=lambda x: np.array([2.0 * x[0]]))
    sched = PhaseSchedule(phases=(Phase(goal=goal_1d, deadline=2.0, label="origin"),))
    cases.append(SyntheticCase(
        scenario=Scenario(
            scenario_id="synthetic:int1d",
            sys=_integrator(1),
            schedule=sched,
            bounds=InputBounds(lower=np.array([-2.0]), upper=np.array([2.0])),
            params=SynthesisParams.for_deadline(2.0, 2.0, m=1),
            x0=np.array([1.0]),
            dt=1e-3,
        ),
        description="1-D integrator to a ball at the origin; the reach-rate "
                    "slack stays nonpositive throughout",
    ))

    goal_2d = SetFunction(name="goal_disk", kind=SetKind.GOAL,
                          h=lambda x: float((x[0] - 2.0) ** 2 + x[1] ** 2 - 0.0625),
                          grad_h=lambda x: np.array([2.0 * (x[0] - 2.0), 2.0 * x[1]]))
    obstacle = SetFunction(name="obstacle_disk", kind=SetKind.SAFE,
                           h=lambda x: float(0.16 - ((x[0] - 1.0) ** 2 + x[1] ** 2)),
                           grad_h=lambda x: np.array([-2.0 * (x[0] - 1.0), -2.0 * x[1]]))
    sched2 = PhaseSchedule(
        phases=(Phase(goal=goal_2d, deadline=6.0, label="across"),),
        global_safes=(obstacle,),
    )
    cases.append(SyntheticCase(
        scenario=Scenario(
            scenario_id="synthetic:int2d",
            sys=_integrator(2),
            schedule=sched2,
            bounds=InputBounds(lower=-np.ones(2), upper=np.ones(2)),
            params=SynthesisParams.for_deadline(6.0, 2.0, m=2),
            x0=np.array([0.0, 0.05]),
            dt=1e-3,
        ),
        description="2-D integrator detouring around an obstacle disk on the "
                    "straight line to the goal",
    ))

    def f_nl(x):
        return np.array([-0.5 * x[1], 0.5 * math.sin(x[0])])

    def g_nl(x):
        return np.eye(2)

    goal_nl = SetFunction(name="goal_nl", kind=SetKind.GOAL,
                          h=lambda x: float((x[0] - 1.0) ** 2 + (x[1] - 0.5) ** 2 - 0.04),
                          grad_h=lambda x: np.array([2.0 * (x[0] - 1.0), 2.0 * (x[1] - 0.5)]))
    keep_in = SetFunction(name="disk4", kind=SetKind.SAFE,
                          h=lambda x: float(x[0] ** 2 + x[1] ** 2 - 4.0),
                          grad_h=lambda x: 2.0 * np.asarray(x, dtype=float))
    sched3 = PhaseSchedule(
        phases=(Phase(goal=goal_nl, deadline=3.0, label="inward"),),
        global_safes=(keep_in,),
    )
    cases.append(SyntheticCase(
        scenario=Scenario(
            scenario_id="synthetic:fullact2d",
            sys=ControlAffineSystem(n=2, m=2, f=f_nl, g=g_nl, name="fullact2d"),
            schedule=sched3,
            bounds=InputBounds(lower=-5.0 * np.ones(2), upper=5.0 * np.ones(2)),
            params=SynthesisParams.for_deadline(3.0, 2.0, m=2),
            x0=np.array([-1.2, -0.4]),
            dt=1e-3,
        ),
        description="fully actuated nonlinear system confined to a disk; an "
                    "inward input exists everywhere on the boundary",
    ))
    return cases


def scenario_from_id(scenario_id: str, overrides: dict | None = None) -> Scenario:
    """Build a scenario by id: 'acc', 'two-robot', or 'synthetic:<name>'.

    Overrides are applied to the scenario's config dataclass by field name;
    unknown fields raise ValueError.
    """
    overrides = dict(overrides or {})
    if scenario_id == "acc":
        return acc_scenario(_apply_overrides(AccConfig(), overrides))
    if scenario_id == "two-robot":
        return two_robot_scenario(_apply_overrides(TwoRobotConfig(), overrides))
    if scenario_id.startswith("synthetic:"):
        if overrides:
            raise ValueError("synthetic scenarios take no overrides")
        wanted = scenario_id
        for case in synthetic_suite():
            if case.scenario.scenario_id == wanted:
                return case.scenario
        raise ValueError(f"unknown synthetic scenario {scenario_id!r}")
    raise ValueError(f"unknown scenario {scenario_id!r}")


def _apply_overrides(cfg, overrides: dict):
    names = {f.name for f in dataclasses.fields(cfg)}
    unknown = set(overrides) - names
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    typed = {}
    for k, v in overrides.items():
        current = getattr(cfg, k)
        if isinstance(current, tuple):
            typed[k] = tuple(float(p) for p in v)
        elif isinstance(current, float):
            typed[k] = float(v)
        else:
            typed[k] = v
    return replace(cfg, **typed)
