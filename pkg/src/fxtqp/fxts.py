"""Settling-time bound calculus for fixed-time convergence certificates.

Everything here concerns the scalar comparison system

    dV/dt = -alpha1 * V**gamma1 - alpha2 * V**gamma2 + delta1 * V

with gamma1 = 1 + 1/mu and gamma2 = 1 - 1/mu for some mu > 1.  When delta1
is small enough the value V reaches zero within a time that does not depend
on V(0); the closed forms for that time, the domain restriction that appears
once delta1 crosses 2*sqrt(alpha1*alpha2), and a numerical RK4 oracle that
validates the bounds all live in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "FxtsGains",
    "Regime",
    "RegimeKind",
    "ScalarSimResult",
    "SettlingBound",
    "alpha_from_deadline",
    "settling_time_bound_basic",
    "gamma_roots",
    "settling_time_bound",
    "domain_threshold",
    "classify_regime",
    "simulate_scalar_v",
]

# Relative tolerance on delta1^2 - 4*alpha1*alpha2 below which the two roots
# are treated as coincident and the degenerate bound formula applies.
_DEGENERATE_RTOL = 1e-12

HIT_THRESHOLD = 1e-9


@dataclass(frozen=True)
class FxtsGains:
    """Gains (alpha1, alpha2, mu) of the comparison system.

    The exponents are derived, never stored: gamma1 = 1 + 1/mu and
    gamma2 = 2 - gamma1, so gamma1 + gamma2 == 2 holds exactly in floating
    point.
    """

    alpha1: float
    alpha2: float
    mu: float

    def __post_init__(self):
        if not (self.alpha1 > 0 and self.alpha2 > 0):
            raise ValueError("alpha gains must be positive")
        if not self.mu > 1:
            raise ValueError("mu must exceed 1")

    @property
    def gamma1(self) -> float:
        return 1.0 + 1.0 / self.mu

    @property
    def gamma2(self) -> float:
        return 2.0 - self.gamma1

    @property
    def critical_delta1(self) -> float:
        """Threshold 2*sqrt(alpha1*alpha2) separating global from local regimes."""
        return 2.0 * math.sqrt(self.alpha1 * self.alpha2)


class RegimeKind(Enum):
    GLOBAL_WITHIN_DEADLINE = "global_within_deadline"   # delta1 <= 0
    GLOBAL_FIXED_TIME = "global_fixed_time"             # 0 < delta1 < 2*sqrt(a1*a2)
    LOCAL_FIXED_TIME = "local_fixed_time"               # delta1 >= 2*sqrt(a1*a2)


@dataclass(frozen=True)
class Regime:
    """Convergence regime of the comparison system for a given delta1.

    ``v_max`` is the largest V from which convergence is certified
    (math.inf when the certificate is global), and ``roots`` holds the
    barrier roots (a, b) in m = V**(1/mu) space when they are real.
    """

    kind: RegimeKind
    delta1: float
    threshold: float
    k: float
    v_max: float
    roots: tuple[float, float] | None


@dataclass(frozen=True)
class SettlingBound:
    T: float
    regime: Regime


@dataclass(frozen=True)
class ScalarSimResult:
    hit_time: float | None
    times: np.ndarray
    values: np.ndarray


def alpha_from_deadline(T_ud: float, mu: float) -> FxtsGains:
    """Gains meeting a deadline exactly: alpha1 = alpha2 = mu*pi/(2*T_ud).

    With delta1 = 0 the settling-time bound of these gains equals T_ud.
    """
    if not T_ud > 0:
        raise ValueError("deadline must be positive")
    alpha = mu * math.pi / (2.0 * T_ud)
    return FxtsGains(alpha1=alpha, alpha2=alpha, mu=mu)


def settling_time_bound_basic(a: float, b: float, p: float, q: float) -> float:
    """Classic two-power settling bound 1/(a(1-p)) + 1/(b(q-1)).

    Valid for dV/dt <= -a V**p - b V**q with a, b > 0, 0 < p < 1 < q.
    """
    if not (a > 0 and b > 0):
        raise ValueError("rate constants must be positive")
    if not (0 < p < 1 < q):
        raise ValueError("exponents must satisfy 0 < p < 1 < q")
    return 1.0 / (a * (1.0 - p)) + 1.0 / (b * (q - 1.0))


def gamma_roots(alpha1: float, alpha2: float, delta1: float) -> tuple[float, float] | None:
    """Real roots (a <= b) of alpha1*z**2 - delta1*z + alpha2, or None.

    The roots exist when delta1**2 >= 4*alpha1*alpha2; for positive delta1
    both are positive (their product is alpha2/alpha1 and their sum
    delta1/alpha1).
    """
    if not (alpha1 > 0 and alpha2 > 0):
        raise ValueError("alpha gains must be positive")
    disc = delta1 * delta1 - 4.0 * alpha1 * alpha2
    if disc < 0.0:
        return None
    s = math.sqrt(disc)
    return ((delta1 - s) / (2.0 * alpha1), (delta1 + s) / (2.0 * alpha1))


def _is_degenerate(gains: FxtsGains, delta1: float) -> bool:
    disc = delta1 * delta1 - 4.0 * gains.alpha1 * gains.alpha2
    scale = max(delta1 * delta1, 4.0 * gains.alpha1 * gains.alpha2)
    return delta1 > 0.0 and abs(disc) <= _DEGENERATE_RTOL * scale


def classify_regime(gains: FxtsGains, delta1: float, k: float = 0.9) -> Regime:
    """Classify delta1 against 2*sqrt(alpha1*alpha2); ties go local."""
    if not (0.0 < k < 1.0):
        raise ValueError("k must lie in (0, 1)")
    thr = gains.critical_delta1
    roots = gamma_roots(gains.alpha1, gains.alpha2, delta1)
    if delta1 <= 0.0:
        kind = RegimeKind.GLOBAL_WITHIN_DEADLINE
        v_max = math.inf
    elif delta1 < thr and not _is_degenerate(gains, delta1):
        kind = RegimeKind.GLOBAL_FIXED_TIME
        v_max = math.inf
    else:
        kind = RegimeKind.LOCAL_FIXED_TIME
        if roots is None:
            # inside the degenerate band but just below the threshold
            a = math.sqrt(gains.alpha2 / gains.alpha1)
            roots = (a, a)
        v_max = (k * roots[0]) ** gains.mu
    return Regime(kind=kind, delta1=delta1, threshold=thr, k=k, v_max=v_max, roots=roots)


def settling_time_bound(gains: FxtsGains, delta1: float, k: float = 0.9) -> SettlingBound:
    """Piecewise settling-time bound of the comparison system.

    delta1 <= 0:
        T = mu*pi / (2*sqrt(alpha1*alpha2))
    0 < delta1 < 2*sqrt(alpha1*alpha2):
        T = mu/(alpha1*k1) * (pi/2 - atan(k2)),
        k1 = sqrt((4*a1*a2 - d1^2) / (4*a1^2)),  k2 = -d1 / sqrt(4*a1*a2 - d1^2)
    delta1 == 2*sqrt(alpha1*alpha2) (within a relative band of 1e-12):
        T = mu/sqrt(alpha1*alpha2) * k/(1-k)
    delta1 > 2*sqrt(alpha1*alpha2):
        T = mu/(alpha1*(b-a)) * (log((b-k*a)/(a*(1-k))) - log(b/a))

    The last two branches certify convergence only from V <= (k*a)**mu where
    a is the smaller root; see :func:`domain_threshold`.
    """
    regime = classify_regime(gains, delta1, k)
    a1, a2, mu = gains.alpha1, gains.alpha2, gains.mu
    if regime.kind is RegimeKind.GLOBAL_WITHIN_DEADLINE:
        T = mu * math.pi / (2.0 * math.sqrt(a1 * a2))
    elif regime.kind is RegimeKind.GLOBAL_FIXED_TIME:
        rad = 4.0 * a1 * a2 - delta1 * delta1
        k1 = math.sqrt(rad / (4.0 * a1 * a1))
        k2 = -delta1 / math.sqrt(rad)
        T = mu / (a1 * k1) * (math.pi / 2.0 - math.atan(k2))
    elif _is_degenerate(gains, delta1):
        T = mu / math.sqrt(a1 * a2) * (k / (1.0 - k))
    else:
        a, b = regime.roots
        T = mu / (a1 * (b - a)) * (math.log((b - k * a) / (a * (1.0 - k))) - math.log(b / a))
    return SettlingBound(T=T, regime=regime)


def domain_threshold(gains: FxtsGains, delta1: float, k: float = 0.9) -> float:
    """Largest certified V, (k*V1)**mu, or math.inf below the threshold.

    V1 = (delta1 - sqrt(delta1^2 - 4*alpha1*alpha2)) / (2*alpha1) is the
    smaller barrier root; above the returned value the comparison system may
    stall before reaching zero.
    """
    return classify_regime(gains, delta1, k).v_max


def simulate_scalar_v(gains: FxtsGains, delta1: float, V0: float,
                      dt: float) -> ScalarSimResult:
    """RK4 oracle for the comparison system, clamped at V = 0.

    Integrates until V drops to 1e-9 (the hit) or ten times the analytic
    settling bound elapses.  ``hit_time`` is None when the right-hand side
    is nonnegative at V0 (outside the contracting domain) or the horizon is
    exceeded.  RK4 rather than Euler because the gamma2 < 1 power has
    unbounded slope at V = 0 and Euler badly overshoots the hitting time.
    """
    if V0 < 0:
        raise ValueError("V0 must be nonnegative")
    if not dt > 0:
        raise ValueError("dt must be positive")
    a1, a2 = gains.alpha1, gains.alpha2
    g1, g2 = gains.gamma1, gains.gamma2

    def rhs(v: float) -> float:
        vp = v if v > 0.0 else 0.0
        if vp == 0.0:
            return 0.0
        return -a1 * math.pow(vp, g1) - a2 * math.pow(vp, g2) + delta1 * vp

    if V0 <= HIT_THRESHOLD:
        return ScalarSimResult(hit_time=0.0, times=np.array([0.0]), values=np.array([V0]))
    if rhs(V0) >= 0.0:
        return ScalarSimResult(hit_time=None, times=np.array([0.0]), values=np.array([V0]))

    horizon = 10.0 * settling_time_bound(gains, delta1).T
    n_steps = int(math.ceil(horizon / dt))
    stride = max(1, n_steps // 2000)

    times = [0.0]
    values = [V0]
    v = V0
    hit: float | None = None
    for step in range(1, n_steps + 1):
        v_prev = v
        k1 = rhs(v)
        k2 = rhs(v + 0.5 * dt * k1)
        k3 = rhs(v + 0.5 * dt * k2)
        k4 = rhs(v + dt * k3)
        v = v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if v < 0.0:
            v = 0.0
        t = step * dt
        if step % stride == 0 or v <= HIT_THRESHOLD:
            times.append(t)
            values.append(v)
        if v <= HIT_THRESHOLD:
            # interpolate the threshold crossing instead of reporting the
            # grid time; the grid quantization (up to dt) can otherwise
            # exceed a bound that is tight at the domain edge
            frac = (v_prev - HIT_THRESHOLD) / max(v_prev - v, 1e-300)
            hit = (step - 1 + min(1.0, max(0.0, frac))) * dt
            break
    return ScalarSimResult(hit_time=hit, times=np.asarray(times), values=np.asarray(values))
