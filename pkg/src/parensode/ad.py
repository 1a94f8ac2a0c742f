"""Forward-mode dual numbers and the Jacobian/time-derivative drivers.

Right-hand sides must use the elementary functions exported here (``exp``,
``sqrt``, ...) rather than :mod:`math` so that they accept both floats and
:class:`Dual` values.
"""

from __future__ import annotations

import math
from typing import Sequence

from .core import NonFiniteDerivative


class Dual:
    __slots__ = ("value", "partials")

    def __init__(self, value: float, partials: Sequence[float]):
        self.value = float(value)
        self.partials = list(partials)

    @classmethod
    def seed(cls, value: float, k: int, width: int) -> "Dual":
        d = [0.0] * width
        d[k] = 1.0
        return cls(value, d)

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.partials!r})"

    # --- arithmetic -------------------------------------------------------
    def __add__(self, o):
        if isinstance(o, Dual):
            return Dual(self.value + o.value, [a + b for a, b in zip(self.partials, o.partials)])
        return Dual(self.value + o, self.partials)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Dual):
            return Dual(self.value - o.value, [a - b for a, b in zip(self.partials, o.partials)])
        return Dual(self.value - o, self.partials)

    def __rsub__(self, o):
        return Dual(o - self.value, [-a for a in self.partials])

    def __neg__(self):
        return Dual(-self.value, [-a for a in self.partials])

    def __pos__(self):
        return self

    def __mul__(self, o):
        if isinstance(o, Dual):
            a, b = self.value, o.value
            return Dual(a * b, [a * db + b * da for da, db in zip(self.partials, o.partials)])
        return Dual(self.value * o, [o * da for da in self.partials])

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual):
            b = o.value
            q = self.value / b
            return Dual(q, [(da - q * db) / b for da, db in zip(self.partials, o.partials)])
        return Dual(self.value / o, [da / o for da in self.partials])

    def __rtruediv__(self, o):
        q = o / self.value
        s = -q / self.value
        return Dual(q, [s * da for da in self.partials])

    def __pow__(self, o):
        if isinstance(o, Dual):
            return exp(o * log(self))
        v = self.value
        if o == 2:
            return Dual(v * v, [2.0 * v * da for da in self.partials])
        pv = v**o
        dv = o * v ** (o - 1) if o != 0 else 0.0
        return Dual(pv, [dv * da for da in self.partials])

    def __rpow__(self, o):
        return exp(self * math.log(o))

    def __abs__(self):
        return self if self.value >= 0 else -self

    # comparisons act on the value so branches in rhs code stay valid
    def __lt__(self, o):
        return self.value < _val(o)

    def __le__(self, o):
        return self.value <= _val(o)

    def __gt__(self, o):
        return self.value > _val(o)

    def __ge__(self, o):
        return self.value >= _val(o)

    def __float__(self):
        return self.value


def _val(x) -> float:
    return x.value if isinstance(x, Dual) else x


def _lift(x, f, df):
    if isinstance(x, Dual):
        d = df(x.value)
        return Dual(f(x.value), [d * a for a in x.partials])
    return f(x)


def exp(x):
    if isinstance(x, Dual):
        e = math.exp(x.value)
        return Dual(e, [e * a for a in x.partials])
    return math.exp(x)


def log(x):
    return _lift(x, math.log, lambda v: 1.0 / v)


def sqrt(x):
    if isinstance(x, Dual):
        r = math.sqrt(x.value)
        d = 0.5 / r if r > 0 else math.inf
        return Dual(r, [d * a if a != 0.0 else 0.0 for a in x.partials])
    return math.sqrt(x)


def sin(x):
    return _lift(x, math.sin, math.cos)


def cos(x):
    return _lift(x, math.cos, lambda v: -math.sin(v))


def tanh(x):
    return _lift(x, math.tanh, lambda v: 1.0 - math.tanh(v) ** 2)


def pos(x):
    """max(x, 0) with zero derivative on the clamped side."""
    if _val(x) > 0:
        return x
    return 0.0


def value(x) -> float:
    return _val(x)


def _check(partials: Sequence[float]) -> None:
    for a in partials:
        if not math.isfinite(a):
            raise NonFiniteDerivative("non-finite partial derivative")


def jacobian(rhs, u: Sequence[float], p: Sequence[float], t: float) -> list[list[float]]:
    """Dense ∂f/∂u from one rhs call with ``len(u)`` seeds."""
    n = len(u)
    ud = [Dual.seed(u[j], j, n) for j in range(n)]
    f = rhs(ud, p, t)
    J = []
    for fi in f:
        row = fi.partials if isinstance(fi, Dual) else [0.0] * n
        _check(row)
        J.append(list(row))
    return J


def time_derivative(rhs, u: Sequence[float], p: Sequence[float], t: float) -> list[float]:
    """∂f/∂t with a single seed on ``t``; zero for autonomous systems."""
    f = rhs(list(u), p, Dual(t, (1.0,)))
    out = []
    for fi in f:
        d = fi.partials[0] if isinstance(fi, Dual) else 0.0
        if not math.isfinite(d):
            raise NonFiniteDerivative("non-finite time derivative")
        out.append(d)
    return out


def rhs_eval_counted(sys, u, p, t, stats) -> list:
    """``sys.rhs`` with the call recorded in ``stats.n_f_evals``."""
    stats.n_f_evals += 1
    return sys.rhs(u, p, t)


def finite_difference_jacobian(rhs, u, p, t, rel: float = 1e-6) -> list[list[float]]:
    """Central differences; a test oracle only."""
    n = len(u)
    cols = []
    for j in range(n):
        h = rel * max(1.0, abs(u[j]))
        up = list(u)
        um = list(u)
        up[j] += h
        um[j] -= h
        fp = rhs(up, p, t)
        fm = rhs(um, p, t)
        cols.append([(a - b) / (2 * h) for a, b in zip(fp, fm)])
    return [[cols[j][i] for j in range(n)] for i in range(len(cols[0]))]
