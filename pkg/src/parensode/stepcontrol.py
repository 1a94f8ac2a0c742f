"""Error norm, acceptance test and PI step-size controller."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .core import ControllerParams, ParensodeError

Q_FLOOR = 1e-4
MAX_CONSECUTIVE_REJECTS = 20


class StepSizeUnderflow(ParensodeError):
    """A rejected step asked for h below dtmin."""


@dataclass
class ControllerState:
    h: float
    q_prev: float = 1.0
    consecutive_rejects: int = 0


def error_proportion(E: Sequence[float], u_old: Sequence[float], u_new: Sequence[float],
                     abstol: float, rtol: float) -> float:
    """RMS of E_i / (abstol + rtol·max(|u_old_i|, |u_new_i|)); inf on non-finite E."""
    s = 0.0
    for e, a, b in zip(E, u_old, u_new):
        if not math.isfinite(e):
            return math.inf
        aa = abs(a)
        bb = abs(b)
        x = e / (abstol + rtol * (aa if aa > bb else bb))
        s += x * x
    q = math.sqrt(s / len(E))
    return q if math.isfinite(q) else math.inf


def accept_step(q: float) -> bool:
    return q < 1.0


def propose_h(state: ControllerState, q_new: float, ctrl: ControllerParams,
              dtmin: float, dtmax: float) -> float:
    """Next step size; does not mutate ``state``.

    Raises :class:`StepSizeUnderflow` when a rejected step would need h < dtmin.
    """
    h = state.h
    qc = q_new if q_new > Q_FLOOR else Q_FLOOR
    fac = ctrl.eta * qc ** (-ctrl.alpha) * state.q_prev ** ctrl.beta
    if q_new >= 1.0 and fac > ctrl.eta:
        # a rejection never grows on the strength of the previous step
        fac = ctrl.eta
    if fac < ctrl.qmin_factor:
        fac = ctrl.qmin_factor
    elif fac > ctrl.qmax_factor:
        fac = ctrl.qmax_factor
    h_new = fac * h
    if h_new > dtmax:
        h_new = dtmax
    if q_new < 1.0:
        return h_new if h_new > dtmin else dtmin
    if h_new >= h:
        h_new = ctrl.qmin_factor * h
    if h_new < dtmin:
        raise StepSizeUnderflow(f"step size {h_new:g} below dtmin {dtmin:g}")
    return h_new


def update(state: ControllerState, q_new: float, ctrl: ControllerParams,
           dtmin: float, dtmax: float) -> bool:
    """Apply the controller to ``state``; returns whether the step is accepted."""
    h_new = propose_h(state, q_new, ctrl, dtmin, dtmax)
    ok = accept_step(q_new)
    if ok:
        state.q_prev = q_new if q_new > Q_FLOOR else Q_FLOOR
        state.consecutive_rejects = 0
    else:
        state.consecutive_rejects += 1
        if state.consecutive_rejects >= MAX_CONSECUTIVE_REJECTS:
            raise StepSizeUnderflow("too many consecutive rejections")
    state.h = h_new
    return ok


def _rms_scaled(v: Sequence[float], sc: Sequence[float]) -> float:
    s = 0.0
    for a, b in zip(v, sc):
        x = a / b
        s += x * x
    return math.sqrt(s / len(v))


def initial_h(rhs, u0: Sequence[float], p, t0: float, tf: float, abstol: float, rtol: float,
              order: int, dtmin: float, dtmax: float, f0: Sequence[float] | None = None,
              dt0: float | None = None) -> float:
    """Two-evaluation starting step heuristic; ``dt0`` short-circuits it."""
    if dt0 is not None:
        return dt0
    if f0 is None:
        f0 = rhs(list(u0), p, t0)
    span = tf - t0
    sc = [abstol + abs(x) * rtol for x in u0]
    d0 = _rms_scaled(u0, sc)
    d1 = _rms_scaled(f0, sc)
    if d1 == 0.0 or not math.isfinite(d1):
        h = 1e-6 * span
    else:
        h0 = 0.01 * d0 / d1 if (d0 >= 1e-5 and d1 >= 1e-5) else 1e-6
        if h0 > span:
            h0 = span
        u1 = [a + h0 * b for a, b in zip(u0, f0)]
        f1 = rhs(u1, p, t0 + h0)
        d2 = _rms_scaled([a - b for a, b in zip(f1, f0)], sc) / h0
        dm = d1 if d1 > d2 else d2
        if not math.isfinite(dm):
            h1 = h0 * 1e-3
        elif dm <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / dm) ** (1.0 / (order + 1))
        h = 100.0 * h0 if 100.0 * h0 < h1 else h1
    if h > dtmax:
        h = dtmax
    if h > span:
        h = span
    if h < dtmin:
        h = dtmin
    return h
