"""Model registry: right-hand sides, default settings and parameter sweeps.

Right-hand sides are written with plain arithmetic (plus the helpers from
:mod:`parensode.ad`) so they accept dual numbers. Each expression mirrors the
compiled twin term for term, which keeps the two backends bitwise identical
for the explicit schemes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .ad import pos, sqrt
from .core import (Algorithm, EnsembleSpec, InvalidSpec, NoiseKind, ODESystem, SDESystem, System)
from .events import Direction, EventSpec, EventState

# ids shared with the compiled kernels
LORENZ, BALL, ROBER, OREGO, HIRES, POLLU, LINEAR, GBM, CRN = range(1, 10)


# ----------------------------------------------------------------------------
# ODE models
# ----------------------------------------------------------------------------


def lorenz_rhs(u, p, t):
    x, y, z = u
    s, r, g = p[0], p[1], p[2]
    return [s * (y - x), r * x - y - x * z, x * y - g * z]


def lorenz_jac(u, p, t):
    x, y, z = u
    s, r, g = p[0], p[1], p[2]
    return [[-s, s, 0.0], [r - z, -1.0, -x], [y, x, -g]]


def ball_rhs(u, p, t):
    return [u[1], -p[0]]


def ball_jac(u, p, t):
    return [[0.0, 1.0], [0.0, 0.0]]


def ball_events(terminal: bool = False) -> list[EventSpec]:
    """Ground contact: displacement crossing zero downward flips and damps v."""

    def affect(st: EventState) -> None:
        st.u[1] = -st.p[1] * st.u[1]

    return [EventSpec(lambda u, p, t: u[0], affect, Direction.DownCrossing, terminal)]


def rober_rhs(u, p, t):
    y1, y2, y3 = u
    k1, k2, k3 = p[0], p[1], p[2]
    return [-k1 * y1 + k3 * y2 * y3,
            k1 * y1 - k3 * y2 * y3 - k2 * y2 * y2,
            k2 * y2 * y2]


def rober_jac(u, p, t):
    y1, y2, y3 = u
    k1, k2, k3 = p[0], p[1], p[2]
    return [[-k1, k3 * y3, k3 * y2],
            [k1, -k3 * y3 - 2.0 * k2 * y2, -k3 * y2],
            [0.0, 2.0 * k2 * y2, 0.0]]


def orego_rhs(u, p, t):
    y1, y2, y3 = u
    k1, k2, k3 = p[0], p[1], p[2]
    return [k1 * (y2 + y1 * (1.0 - k2 * y1 - y2)),
            (y3 - (1.0 + y1) * y2) / k1,
            k3 * (y1 - y3)]


def orego_jac(u, p, t):
    y1, y2, y3 = u
    k1, k2, k3 = p[0], p[1], p[2]
    return [[k1 * (1.0 - 2.0 * k2 * y1 - y2), k1 * (1.0 - y1), 0.0],
            [-y2 / k1, -(1.0 + y1) / k1, 1.0 / k1],
            [k3, 0.0, -k3]]


def hires_rhs(u, p, t):
    y1, y2, y3, y4, y5, y6, y7, y8 = u
    return [-1.71 * y1 + 0.43 * y2 + 8.32 * y3 + 0.0007,
            1.71 * y1 - 8.75 * y2,
            -10.03 * y3 + 0.43 * y4 + 0.035 * y5,
            8.32 * y2 + 1.71 * y3 - 1.12 * y4,
            -1.745 * y5 + 0.43 * y6 + 0.43 * y7,
            -280.0 * y6 * y8 + 0.69 * y4 + 1.71 * y5 - 0.43 * y6 + 0.69 * y7,
            280.0 * y6 * y8 - 1.81 * y7,
            -280.0 * y6 * y8 + 1.81 * y7]


def hires_jac(u, p, t):
    y6, y8 = u[5], u[7]
    J = [[0.0] * 8 for _ in range(8)]
    J[0][0], J[0][1], J[0][2] = -1.71, 0.43, 8.32
    J[1][0], J[1][1] = 1.71, -8.75
    J[2][2], J[2][3], J[2][4] = -10.03, 0.43, 0.035
    J[3][1], J[3][2], J[3][3] = 8.32, 1.71, -1.12
    J[4][4], J[4][5], J[4][6] = -1.745, 0.43, 0.43
    J[5][3], J[5][4], J[5][5], J[5][6], J[5][7] = 0.69, 1.71, -280.0 * y8 - 0.43, 0.69, -280.0 * y6
    J[6][5], J[6][6], J[6][7] = 280.0 * y8, -1.81, 280.0 * y6
    J[7][5], J[7][6], J[7][7] = -280.0 * y8, 1.81, -280.0 * y6
    return J


POLLU_K = (0.35, 26.6, 12300.0, 0.00086, 0.00082, 15000.0, 0.00013, 24000.0, 16500.0, 9000.0, 0.022,
           12000.0, 1.88, 16300.0, 4.8e6, 0.00035, 0.0175, 1e8, 4.44e11, 1240.0, 2.1, 5.78, 0.0474,
           1780.0, 3.12)


def pollu_rhs(u, p, t):
    (y1, y2, y3, y4, y5, y6, y7, y8, y9, y10, y11, y12, y13, y14, y15, y16, y17, y18, y19, y20) = u
    (k1, k2, k3, k4, k5, k6, k7, k8, k9, k10, k11, k12, k13, k14, k15, k16, k17, k18, k19, k20,
     k21, k22, k23, k24, k25) = p
    return [
        -k1 * y1 - k10 * y11 * y1 - k14 * y1 * y6 - k23 * y1 * y4 - k24 * y19 * y1 + k2 * y2 * y4
        + k3 * y5 * y2 + k9 * y11 * y2 + k11 * y13 + k12 * y10 * y2 + k22 * y19 + k25 * y20,
        -k2 * y2 * y4 - k3 * y5 * y2 - k9 * y11 * y2 - k12 * y10 * y2 + k1 * y1 + k21 * y19,
        -k15 * y3 + k1 * y1 + k17 * y4 + k19 * y16 + k22 * y19,
        -k2 * y2 * y4 - k16 * y4 - k17 * y4 - k23 * y1 * y4 + k15 * y3,
        -k3 * y5 * y2 + 2.0 * k4 * y7 + k6 * y7 * y6 + k7 * y9 + k13 * y14 + k20 * y17 * y6,
        -k6 * y7 * y6 - k8 * y9 * y6 - k14 * y1 * y6 - k20 * y17 * y6 + k3 * y5 * y2 + 2.0 * k18 * y16,
        -k4 * y7 - k5 * y7 - k6 * y7 * y6 + k13 * y14,
        k4 * y7 + k5 * y7 + k6 * y7 * y6 + k7 * y9,
        -k7 * y9 - k8 * y9 * y6,
        -k12 * y10 * y2 + k7 * y9 + k9 * y11 * y2,
        -k9 * y11 * y2 - k10 * y11 * y1 + k8 * y9 * y6 + k11 * y13,
        k9 * y11 * y2,
        -k11 * y13 + k10 * y11 * y1,
        -k13 * y14 + k12 * y10 * y2,
        k14 * y1 * y6,
        -k18 * y16 - k19 * y16 + k16 * y4,
        -k20 * y17 * y6,
        k20 * y17 * y6,
        -k21 * y19 - k22 * y19 - k24 * y19 * y1 + k23 * y1 * y4 + k25 * y20,
        -k25 * y20 + k24 * y19 * y1,
    ]


def pollu_jac(u, p, t):
    # rhs is bilinear in the state, so one pass with unit vectors recovers J exactly
    from .ad import jacobian

    return jacobian(pollu_rhs, u, p, t)


def linear_rhs(u, p, t):
    return [p[0] * u[0]]


def linear_jac(u, p, t):
    return [[p[0]]]


# ----------------------------------------------------------------------------
# SDE models
# ----------------------------------------------------------------------------


def gbm_drift(u, p, t):
    r = p[0]
    return [r * x for x in u]


def gbm_diffusion(u, p, t):
    v = p[1]
    return [v * x for x in u]


def crn_hill(u, p):
    S, D, n = p[0], p[1], p[4]
    a = pos(S * u[0]) ** n
    b = pos(D * u[3]) ** n
    return a / (a + b + 1.0)


def crn_drift(u, p, t):
    sg, a1, a2, a3 = u
    tau, nu0 = p[2], p[3]
    return [nu0 + crn_hill(u, p) - sg,
            sg / tau - a1 / tau,
            a1 / tau - a2 / tau,
            a2 / tau - a3 / tau]


def crn_diffusion(u, p, t):
    sg, a1, a2, a3 = u
    tau, nu0, eta = p[2], p[3], p[5]
    B = [[0.0] * 8 for _ in range(4)]
    B[0][0] = eta * sqrt(pos(nu0 + crn_hill(u, p)))
    B[0][1] = -eta * sqrt(pos(sg))
    B[1][2] = eta * sqrt(pos(sg / tau))
    B[1][3] = -eta * sqrt(pos(a1 / tau))
    B[2][4] = eta * sqrt(pos(a1 / tau))
    B[2][5] = -eta * sqrt(pos(a2 / tau))
    B[3][6] = eta * sqrt(pos(a2 / tau))
    B[3][7] = -eta * sqrt(pos(a3 / tau))
    return B


CRN_RANGES = ((0.1, 100.0), (0.1, 100.0), (0.1, 100.0), (0.01, 0.2), (2.0, 4.0), (0.001, 0.1))
CRN_DEFAULTS = (10.0, 10.0, 10.0, 0.1, 3.0, 0.01)
CRN_LEVELS = 10


def crn_params(i: int) -> tuple:
    """Point ``i`` of the Cartesian product of 10 levels per parameter (last fastest)."""
    out = []
    for k, (lo, hi) in enumerate(CRN_RANGES):
        level = (i // CRN_LEVELS ** (len(CRN_RANGES) - 1 - k)) % CRN_LEVELS
        out.append(lo + (hi - lo) * level / (CRN_LEVELS - 1))
    return tuple(out)


# ----------------------------------------------------------------------------
# registry
# ----------------------------------------------------------------------------

LORENZ_SYS = ODESystem(3, lorenz_rhs, "lorenz", lorenz_jac, LORENZ)
BALL_SYS = ODESystem(2, ball_rhs, "bouncing_ball", ball_jac, BALL)
ROBER_SYS = ODESystem(3, rober_rhs, "rober", rober_jac, ROBER)
OREGO_SYS = ODESystem(3, orego_rhs, "orego", orego_jac, OREGO)
HIRES_SYS = ODESystem(8, hires_rhs, "hires", hires_jac, HIRES)
POLLU_SYS = ODESystem(20, pollu_rhs, "pollu", pollu_jac, POLLU)
LINEAR_SYS = ODESystem(1, linear_rhs, "linear_ode", linear_jac, LINEAR)
GBM_SYS = SDESystem(3, 3, gbm_drift, gbm_diffusion, NoiseKind.Diagonal, "gbm", GBM)
CRN_SYS = SDESystem(4, 8, crn_drift, crn_diffusion, NoiseKind.General, "crn", CRN)


@dataclass(frozen=True)
class ProblemEntry:
    name: str
    system: System
    u0: tuple
    p: tuple
    tspan: tuple
    algorithm: Algorithm
    dt0: Optional[float] = None
    abstol: float = 1e-8
    rtol: float = 1e-8
    adaptive: bool = True
    sweep: Optional[Callable[[int, int], tuple]] = None
    events: Optional[Callable[[], list]] = None
    reference_f0: Optional[tuple] = None
    notes: str = ""

    def ensemble(self, n: int, u0=None, p=None) -> EnsembleSpec:
        u0 = tuple(self.u0 if u0 is None else u0)
        p = tuple(self.p if p is None else p)
        sweep = self.sweep

        if sweep is None:
            vary = None
        else:
            def vary(i: int, n=n, u0=u0, p=p):
                return sweep(i, n, u0, p)
        return EnsembleSpec(self.system, u0, self.tspan, n, vary, p)


def _lorenz_sweep(i, n, u0, p):
    return u0, (p[0], 21.0 * (i + 1) / n, p[2]), 0


def _ball_sweep(i, n, u0, p):
    return u0, (p[0], 0.5 + 0.45 * (i + 1) / n), 0


def _scale_param(k: int, lo: float, hi: float):
    """Multiply parameter k by a factor swept uniformly over [lo, hi]."""

    def sweep(i, n, u0, p):
        f = lo + (hi - lo) * (i / max(n - 1, 1))
        q = list(p)
        q[k] = p[k] * f
        return u0, tuple(q), 0

    return sweep


def _hires_sweep(i, n, u0, p):
    f = 0.5 + (i / max(n - 1, 1))
    u = list(u0)
    u[7] = u0[7] * f
    return tuple(u), p, 0


def _seed_sweep(i, n, u0, p):
    return u0, p, 0


def _crn_sweep(i, n, u0, p):
    q = crn_params(i)
    return (q[3],) * 4, q, 0


REGISTRY: dict[str, ProblemEntry] = {
    "lorenz": ProblemEntry("lorenz", LORENZ_SYS, (1.0, 0.0, 0.0), (10.0, 21.0, 8.0 / 3.0), (0.0, 1.0),
                           Algorithm.Tsit5, dt0=0.001, abstol=1e-8, rtol=1e-8, adaptive=False,
                           sweep=_lorenz_sweep, reference_f0=(-10.0, 21.0, 0.0),
                           notes="p = (sigma, rho, gamma); rho swept over (0, 21]"),
    "bouncing_ball": ProblemEntry("bouncing_ball", BALL_SYS, (5.0, 0.0), (9.8, 0.9), (0.0, 15.0),
                                  Algorithm.Tsit5, abstol=1e-8, rtol=1e-8, sweep=_ball_sweep,
                                  events=ball_events, reference_f0=(0.0, -9.8),
                                  notes="p = (g, e); restitution e swept over (0.5, 0.95]"),
    "rober": ProblemEntry("rober", ROBER_SYS, (1.0, 0.0, 0.0), (0.04, 3e7, 1e4), (0.0, 1e5),
                          Algorithm.Rosenbrock23, dt0=1e-4, sweep=_scale_param(0, 0.5, 1.5),
                          reference_f0=(-0.04, 0.04, 0.0), notes="p = (k1, k2, k3); k1 scaled by [0.5, 1.5]"),
    "orego": ProblemEntry("orego", OREGO_SYS, (1.0, 2.0, 3.0), (77.27, 8.375e-6, 0.161), (0.0, 30.0),
                          Algorithm.Rosenbrock23, abstol=1e-6, rtol=1e-6, sweep=_scale_param(2, 0.5, 1.5),
                          notes="p = (k1, k2, k3); k3 scaled by [0.5, 1.5]"),
    "hires": ProblemEntry("hires", HIRES_SYS, (1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0057), (),
                          (0.0, 321.8122), Algorithm.Rosenbrock23, abstol=1e-6, rtol=1e-6,
                          sweep=_hires_sweep, notes="y8(0) scaled by [0.5, 1.5]"),
    "pollu": ProblemEntry("pollu", POLLU_SYS,
                          (0.0, 0.2, 0.0, 0.04, 0.0, 0.0, 0.1, 0.3, 0.017, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                           0.0, 0.007, 0.0, 0.0, 0.0),
                          POLLU_K, (0.0, 60.0), Algorithm.Rosenbrock23, abstol=1e-6, rtol=1e-6,
                          sweep=_scale_param(0, 0.5, 1.5), notes="k1 scaled by [0.5, 1.5]"),
    "linear_ode": ProblemEntry("linear_ode", LINEAR_SYS, (1.0,), (-1.0,), (0.0, 1.0), Algorithm.Tsit5,
                               abstol=1e-10, rtol=1e-10, sweep=_scale_param(0, 0.5, 1.5),
                               reference_f0=(-1.0,), notes="u' = lambda u; lambda scaled by [0.5, 1.5]"),
    "gbm": ProblemEntry("gbm", GBM_SYS, (0.1, 0.1, 0.1), (1.5, 0.01), (0.0, 1.0), Algorithm.EM,
                        dt0=1e-3, adaptive=False, sweep=_seed_sweep, reference_f0=(0.15, 0.15, 0.15),
                        notes="p = (r, V); trajectories differ only by their noise stream"),
    "crn": ProblemEntry("crn", CRN_SYS, (0.1,) * 4, CRN_DEFAULTS, (0.0, 1000.0), Algorithm.EM, dt0=0.1,
                        adaptive=False, sweep=_crn_sweep,
                        notes="p = (S, D, tau, nu0, n, eta); Cartesian product over the parameter ranges"),
}


def get(name: str) -> ProblemEntry:
    try:
        return REGISTRY[name]
    except KeyError:
        raise InvalidSpec(f"unknown problem {name!r}; choose from {', '.join(REGISTRY)}") from None


def evaluate_f0(entry: ProblemEntry) -> list[float]:
    sys = entry.system
    f = sys.rhs if isinstance(sys, ODESystem) else sys.drift
    return [float(x) for x in f(list(entry.u0), entry.p, entry.tspan[0])]


def selfcheck() -> list[tuple[str, bool, str]]:
    """Evaluate each model at its initial condition against stored references."""
    out = []
    for name, e in REGISTRY.items():
        f0 = evaluate_f0(e)
        ok = all(math.isfinite(x) for x in f0) and len(f0) == e.system.dim
        msg = "finite"
        if e.reference_f0 is not None:
            ok = ok and all(abs(a - b) <= 1e-12 * max(1.0, abs(b)) for a, b in zip(f0, e.reference_f0))
            msg = f"f0 = {f0}"
        out.append((name, ok, msg))
    return out
