"""Zero-crossing events located by bisection on the step interpolant."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

MAX_BISECT = 60
# after an event fires, its sign on the next step is read this far into the step
NUDGE = 0.01


class Direction(enum.Enum):
    Any = 0
    UpCrossing = 1
    DownCrossing = -1


@dataclass
class EventState:
    """What an affect may modify: the state, and integrator-local parameters."""

    u: list
    t: float
    p: list


@dataclass(frozen=True)
class EventSpec:
    condition: Callable[[Sequence[float], Sequence[float], float], float]
    affect: Optional[Callable[[EventState], None]] = None
    direction: Direction = Direction.Any
    terminal: bool = False
    root_tol: Optional[float] = None

    def tol(self, tspan: tuple[float, float]) -> float:
        return self.root_tol if self.root_tol is not None else 1e-8 * (tspan[1] - tspan[0])


def crosses(g0: float, g1: float, direction: Direction) -> bool:
    """Strict sign change over a step. A zero at the left end never counts;
    a zero at the right end does, so a root landing on a step boundary is
    not lost."""
    up = g0 < 0.0 and g1 >= 0.0
    down = g0 > 0.0 and g1 <= 0.0
    if direction is Direction.UpCrossing:
        return up
    if direction is Direction.DownCrossing:
        return down
    return up or down


def locate(g_at: Callable[[float], float], g0: float, h: float, root_tol: float,
           lo: float = 0.0) -> tuple[float, bool]:
    """Bisect θ ∈ (lo, 1] until the bracket is ≤ root_tol wide in time.

    Returns (θ*, hit_cap). θ* is the right end of the final bracket, so the
    condition has already changed sign there.
    """
    hi = 1.0
    neg = g0 < 0.0
    for _ in range(MAX_BISECT):
        if (hi - lo) * h <= root_tol:
            return hi, False
        mid = 0.5 * (lo + hi)
        gm = g_at(mid)
        if (gm < 0.0) == neg and gm != 0.0:
            lo = mid
        else:
            hi = mid
    return hi, (hi - lo) * h > root_tol


@dataclass
class EventOutcome:
    """Result of :func:`detect_and_apply`; ``kind`` is "none", "event" or "terminate"."""

    kind: str
    t: float = 0.0
    u: Optional[list] = None
    index: int = -1
    theta: float = 1.0
    capped: bool = False


def find_earliest(events: Sequence[EventSpec], g_prev: Sequence[float], u_new, p, t: float,
                  h: float, t_new: float, interp: Callable[[float], list],
                  tspan: tuple[float, float], rearm: int = -1) -> tuple[Optional[tuple[float, int, bool]], list]:
    """Check every event over one step; return the earliest root and the end values.

    ``rearm`` is the index of an event that fired at ``t``. Its condition
    sits on the root there (possibly a hair past it), so its starting sign
    is taken at θ = NUDGE instead of θ = 0.
    """
    best = None
    g_end = []
    for k, ev in enumerate(events):
        g1 = ev.condition(u_new, p, t_new)
        g_end.append(g1)
        g0, lo = g_prev[k], 0.0
        if k == rearm:
            lo = NUDGE
            g0 = ev.condition(interp(lo), p, t + lo * h)
        if not crosses(g0, g1, ev.direction):
            continue
        theta, capped = locate(lambda th: ev.condition(interp(th), p, t + th * h), g0, h, ev.tol(tspan), lo)
        if best is None or theta < best[0]:
            best = (theta, k, capped)
    return best, g_end


def detect_and_apply(events: Sequence[EventSpec], g_prev: Sequence[float], u_new, p: list,
                     t: float, h: float, t_new: float, interp: Callable[[float], list],
                     tspan: tuple[float, float]) -> EventOutcome:
    """Standalone form: locate the earliest event on the step and apply its affect."""
    best, _ = find_earliest(events, g_prev, u_new, p, t, h, t_new, interp, tspan)
    if best is None:
        return EventOutcome("none")
    theta, k, capped = best
    t_star = t_new if theta == 1.0 else t + theta * h
    u_star = list(u_new) if theta == 1.0 else list(interp(theta))
    ev = events[k]
    if ev.affect is not None:
        st = EventState(u_star, t_star, p)
        ev.affect(st)
        u_star = st.u
    return EventOutcome("terminate" if ev.terminal else "event", t_star, u_star, k, theta, capped)
