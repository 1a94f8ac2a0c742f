"""Single-trajectory ODE kernels (pure Python reference path)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from . import ad
from .core import (Algorithm, ODESystem, OutOfRange, RetCode, SolutionBuffers, SolveConfig, Stats,
                   fixed_step_count, validate_config)
from .events import EventSpec, EventState, find_earliest
from .linalg import lu_factor, lu_solve
from .stepcontrol import MAX_CONSECUTIVE_REJECTS, Q_FLOOR, error_proportion, initial_h
from .tableaus import ROS23_C32, ROS23_D, TSIT5_A, TSIT5_BTILDE, TSIT5_C, tsit5_interp_weights

_, (A21,), (A31, A32), (A41, A42, A43), (A51, A52, A53, A54), (A61, A62, A63, A64, A65), \
    (B1, B2, B3, B4, B5, B6) = TSIT5_A
_, C2, C3, C4, C5, _, _ = TSIT5_C
E1, E2, E3, E4, E5, E6, E7 = TSIT5_BTILDE


@dataclass
class StepOutput:
    u_new: list
    err: Optional[list]
    ks: tuple
    f_new: list
    failed: bool = False


def _rhs_of(sys):
    return sys.rhs if isinstance(sys, ODESystem) else sys


# ----------------------------------------------------------------------------
# Tsit5
# ----------------------------------------------------------------------------


def _tsit5(rhs, u, p, t, h, k1):
    k2 = rhs([a + h * (A21 * b) for a, b in zip(u, k1)], p, t + C2 * h)
    k3 = rhs([a + h * (A31 * b + A32 * c) for a, b, c in zip(u, k1, k2)], p, t + C3 * h)
    k4 = rhs([a + h * (A41 * b + A42 * c + A43 * d) for a, b, c, d in zip(u, k1, k2, k3)], p, t + C4 * h)
    k5 = rhs([a + h * (A51 * b + A52 * c + A53 * d + A54 * e)
              for a, b, c, d, e in zip(u, k1, k2, k3, k4)], p, t + C5 * h)
    t_new = t + h
    k6 = rhs([a + h * (A61 * b + A62 * c + A63 * d + A64 * e + A65 * f)
              for a, b, c, d, e, f in zip(u, k1, k2, k3, k4, k5)], p, t_new)
    u_new = [a + h * (B1 * b + B2 * c + B3 * d + B4 * e + B5 * f + B6 * g)
             for a, b, c, d, e, f, g in zip(u, k1, k2, k3, k4, k5, k6)]
    k7 = rhs(u_new, p, t_new)
    return u_new, (k1, k2, k3, k4, k5, k6, k7)


def _tsit5_err(h, ks):
    k1, k2, k3, k4, k5, k6, k7 = ks
    return [h * (E1 * a + E2 * b + E3 * c + E4 * d + E5 * e + E6 * f + E7 * g)
            for a, b, c, d, e, f, g in zip(k1, k2, k3, k4, k5, k6, k7)]


def tsit5_step(sys, u: Sequence[float], p, t: float, h: float,
               f_prev: Optional[Sequence[float]] = None, stats: Optional[Stats] = None) -> StepOutput:
    """One Tsitouras 5(4) step. With ``f_prev`` (FSAL) only six rhs calls are made."""
    rhs = _rhs_of(sys)
    u = list(u)
    k1 = list(f_prev) if f_prev is not None else rhs(u, p, t)
    u_new, ks = _tsit5(rhs, u, p, t, h, k1)
    if stats is not None:
        stats.n_f_evals += 6 if f_prev is not None else 7
    return StepOutput(u_new, _tsit5_err(h, ks), ks, ks[6])


def tsit5_interpolate(u: Sequence[float], u_new: Sequence[float], h: float, ks, theta: float) -> list:
    if not 0.0 <= theta <= 1.0:
        raise OutOfRange(f"theta {theta} outside [0, 1]")
    if theta == 0.0:
        return list(u)
    if theta == 1.0:
        return list(u_new)
    w1, w2, w3, w4, w5, w6, w7 = tsit5_interp_weights(theta)
    k1, k2, k3, k4, k5, k6, k7 = ks
    return [x + h * (w1 * a + w2 * b + w3 * c + w4 * d + w5 * e + w6 * f + w7 * g)
            for x, a, b, c, d, e, f, g in zip(u, k1, k2, k3, k4, k5, k6, k7)]


# ----------------------------------------------------------------------------
# Rosenbrock23
# ----------------------------------------------------------------------------


def _ros23(rhs, u, p, t, h, f0, need_err):
    """Returns (u_new, err, f_new, k1, n_f_evals) or None if W is singular."""
    J = ad.jacobian(rhs, u, p, t)
    dT = ad.time_derivative(rhs, u, p, t)
    n = len(u)
    dtg = h * ROS23_D
    W = [[(1.0 if i == j else 0.0) - dtg * J[i][j] for j in range(n)] for i in range(n)]
    F = lu_factor(W)
    if F.singular:
        return None
    gT = [dtg * x for x in dT]
    k1 = lu_solve(F, [a + b for a, b in zip(f0, gT)])
    hh = 0.5 * h
    f1 = rhs([a + hh * b for a, b in zip(u, k1)], p, t + hh)
    k2 = lu_solve(F, [a - b for a, b in zip(f1, k1)])
    k2 = [a + b for a, b in zip(k2, k1)]
    u_new = [a + h * b for a, b in zip(u, k2)]
    f2 = rhs(u_new, p, t + h)
    err = None
    if need_err:
        r = [a - ROS23_C32 * (b - c) - 2.0 * (d - e) + g for a, b, c, d, e, g in zip(f2, k2, f1, k1, f0, gT)]
        k3 = lu_solve(F, r)
        h6 = h / 6.0
        err = [h6 * (a - 2.0 * b + c) for a, b, c in zip(k1, k2, k3)]
    return u_new, err, f2, (k1, k2)


def rosenbrock23_step(sys, u: Sequence[float], p, t: float, h: float,
                      f_prev: Optional[Sequence[float]] = None, stats: Optional[Stats] = None) -> StepOutput:
    """One linearly implicit 2(3) step; ``failed`` is set when W is singular."""
    rhs = _rhs_of(sys)
    u = list(u)
    f0 = list(f_prev) if f_prev is not None else rhs(u, p, t)
    res = _ros23(rhs, u, p, t, h, f0, True)
    if stats is not None:
        stats.n_jac_evals += 1
        stats.n_factorizations += 1
        stats.n_f_evals += (0 if f_prev is not None else 1) + (2 if res is not None else 0)
    if res is None:
        return StepOutput(u, None, (f0,), f0, failed=True)
    u_new, err, f2, _ = res
    return StepOutput(u_new, err, (f0, f2), f2)


def hermite_interpolate(u: Sequence[float], f0: Sequence[float], u_new: Sequence[float],
                        f1: Sequence[float], h: float, theta: float) -> list:
    """Cubic Hermite through (u_n, f_n) and (u_{n+1}, f_{n+1})."""
    if not 0.0 <= theta <= 1.0:
        raise OutOfRange(f"theta {theta} outside [0, 1]")
    if theta == 0.0:
        return list(u)
    if theta == 1.0:
        return list(u_new)
    th = theta
    th1 = th - 1.0
    a = 1.0 - th
    c = th * th1
    m = 1.0 - 2.0 * th
    return [a * x0 + th * x1 + c * (m * (x1 - x0) + th1 * h * d0 + th * h * d1)
            for x0, d0, x1, d1 in zip(u, f0, u_new, f1)]


# ----------------------------------------------------------------------------
# driver
# ----------------------------------------------------------------------------


def _finite(v) -> bool:
    for x in v:
        if not math.isfinite(x):
            return False
    return True


class _Saver:
    """Writes one trajectory's output into its row of a SolutionBuffers."""

    __slots__ = ("b", "i", "k", "states", "times", "grid", "cap", "overflow")

    def __init__(self, buffers: SolutionBuffers, i: int):
        self.b = buffers
        self.i = i
        self.k = 0
        self.states = buffers.states[i]
        self.times = buffers.times[i] if buffers.every else None
        self.grid = buffers.grid
        self.cap = buffers.cap
        self.overflow = False

    def point(self, t, u) -> None:
        if self.k >= self.cap:
            self.overflow = True
            return
        self.states[self.k] = u
        if self.times is not None:
            self.times[self.k] = t
        self.k += 1

    def step(self, t, h, t_new, u_new, interp, upto=None, inclusive=True) -> None:
        """Grid mode: fill grid points in (t, limit] (or (t, limit) if not inclusive)."""
        g = self.grid
        lim = t_new if upto is None else upto
        while self.k < self.cap:
            tg = g[self.k]
            if tg > lim or (not inclusive and tg >= lim):
                break
            self.states[self.k] = u_new if tg == t_new else interp((tg - t) / h)
            self.k += 1

    def finish(self, ret: RetCode, stats: Stats, t_end: float) -> RetCode:
        if self.overflow and ret is RetCode.Success:
            ret = RetCode.MaxIters
        b = self.b
        b.lengths[self.i] = self.k
        b.retcodes[self.i] = int(ret)
        b.t_end[self.i] = t_end
        b.stats[self.i] = (stats.n_accept, stats.n_reject, stats.n_f_evals, stats.n_jac_evals,
                           stats.n_factorizations, stats.n_event_warnings)
        return ret


def integrate(sys: ODESystem, u0: Sequence[float], p: Sequence[float], tspan: tuple[float, float],
              cfg: SolveConfig, events: Optional[Sequence[EventSpec]] = None,
              sink: Optional[SolutionBuffers] = None, index: int = 0, check: bool = True) -> RetCode:
    """Integrate one trajectory, writing into row ``index`` of ``sink``."""
    if check:
        validate_config(cfg, sys)
    if sink is None:
        sink = SolutionBuffers(1, sys.dim, cfg, tspan, has_events=bool(events))
        index = 0
    events = list(events or ())
    rhs = sys.rhs
    t0, tf = float(tspan[0]), float(tspan[1])
    algo = cfg.algorithm
    is_tsit = algo is Algorithm.Tsit5
    adaptive = cfg.adaptive
    abstol, rtol = cfg.abstol, cfg.rtol
    ctrl = cfg.ctrl
    eta, alpha, beta, qmin, qmax = ctrl.eta, ctrl.alpha, ctrl.beta, ctrl.qmin_factor, ctrl.qmax_factor
    dtmin, dtmax = cfg.step_bounds(tspan)
    max_steps = cfg.max_steps
    every = sink.every

    stats = Stats()
    sv = _Saver(sink, index)
    p = list(p)
    u = [float(x) for x in u0]
    t = t0
    f0 = rhs(u, p, t)
    stats.n_f_evals += 1
    sv.point(t, u)
    if not _finite(f0) or not _finite(u):
        return sv.finish(RetCode.Diverged, stats, t)

    if adaptive:
        def counted(uu, pp, tt):
            stats.n_f_evals += 1
            return rhs(uu, pp, tt)
        h = initial_h(counted, u, p, t0, tf, abstol, rtol, 5 if is_tsit else 2, dtmin, dtmax,
                      f0=f0, dt0=cfg.dt0)
        nsteps = 0
    else:
        dt = cfg.dt0
        nsteps = fixed_step_count(tspan, dt)
        h = dt
    q_prev = 1.0
    rejects = 0
    kfix = 0
    g_prev = [ev.condition(u, p, t) for ev in events]
    rearm = -1
    ret = RetCode.Success

    while t < tf:
        if stats.n_accept >= max_steps:
            ret = RetCode.MaxIters
            break
        if adaptive:
            if t + h * (1.0 + 1e-10) >= tf:
                h = tf - t
                t_new = tf
            else:
                t_new = t + h
        else:
            t_new = tf if kfix + 1 >= nsteps else t0 + (kfix + 1) * dt
            h = t_new - t

        # --- one attempted step -------------------------------------------
        if is_tsit:
            u_new, ks = _tsit5(rhs, u, p, t, h, f0)
            stats.n_f_evals += 6
            f_new = ks[6]
            err = _tsit5_err(h, ks) if adaptive else None
            res_ok = True
        else:
            stats.n_jac_evals += 1
            stats.n_factorizations += 1
            res = _ros23(rhs, u, p, t, h, f0, adaptive)
            res_ok = res is not None
            if res_ok:
                stats.n_f_evals += 2
                u_new, err, f_new, _ = res

        if adaptive:
            q = error_proportion(err, u, u_new, abstol, rtol) if res_ok else math.inf
            qc = q if q > Q_FLOOR else Q_FLOOR
            fac = eta * qc ** (-alpha) * q_prev ** beta
            if q >= 1.0 and fac > eta:
                fac = eta
            if fac < qmin:
                fac = qmin
            elif fac > qmax:
                fac = qmax
            h_next = fac * h
            if h_next > dtmax:
                h_next = dtmax
            if q >= 1.0:
                stats.n_reject += 1
                rejects += 1
                if h_next >= h:
                    h_next = qmin * h
                if rejects >= MAX_CONSECUTIVE_REJECTS or h_next < dtmin:
                    ret = RetCode.DtBelowMin
                    break
                h = h_next
                continue
            if h_next < dtmin:
                h_next = dtmin
            q_prev = qc
            rejects = 0
        else:
            if not res_ok:
                ret = RetCode.Diverged
                break
            h_next = h

        # --- accepted -----------------------------------------------------
        stats.n_accept += 1
        if not _finite(u_new):
            ret = RetCode.Diverged
            break

        if is_tsit:
            def interp(th, u=u, u_new=u_new, h=h, ks=ks):
                return tsit5_interpolate(u, u_new, h, ks, th)
        else:
            def interp(th, u=u, f0=f0, u_new=u_new, f_new=f_new, h=h):
                return hermite_interpolate(u, f0, u_new, f_new, h, th)

        hit = None
        if events:
            hit, g_end = find_earliest(events, g_prev, u_new, p, t, h, t_new, interp, tspan, rearm)
            g_prev = g_end
            rearm = -1
        if hit is None:
            if every:
                sv.point(t_new, u_new)
                if sv.overflow:
                    ret = RetCode.MaxIters
                    break
            else:
                sv.step(t, h, t_new, u_new, interp)
            t, u, f0 = t_new, u_new, f_new
            kfix += 1
            h = h_next
            continue

        theta, k_ev, capped = hit
        ev = events[k_ev]
        if capped:
            stats.n_event_warnings += 1
        if theta == 1.0:
            t_star, u_star = t_new, list(u_new)
        else:
            t_star, u_star = t + theta * h, interp(theta)
        if not every:
            sv.step(t, h, t_new, u_new, interp, upto=t_star, inclusive=not ev.terminal)
        if ev.affect is not None:
            st = EventState(list(u_star), t_star, p)
            ev.affect(st)
            u_star = [float(x) for x in st.u]
            p = st.p
        if ev.terminal:
            if every:
                sv.point(t_star, u_star)
            else:
                sv.k = min(sv.k, sv.cap - 1)
                sv.point(t_star, u_star)
            t, u = t_star, u_star
            ret = RetCode.Terminated
            break
        if every:
            sv.point(t_star, u_star)
        t, u = t_star, u_star
        if t_star == t_new:
            kfix += 1
        f0 = rhs(u, p, t)
        stats.n_f_evals += 1
        g_prev = [e.condition(u, p, t) for e in events]
        rearm = k_ev
        h = h_next

    return sv.finish(ret, stats, t)


def solve(sys: ODESystem, u0, p, tspan, cfg: SolveConfig, events=None):
    """Convenience wrapper returning a :class:`~parensode.core.Trajectory`."""
    sink = SolutionBuffers(1, sys.dim, cfg, tspan, has_events=bool(events))
    integrate(sys, u0, p, tspan, cfg, events, sink, 0)
    return sink.trajectory(0)
