"""Coefficient sets for the explicit and linearly implicit schemes."""

from __future__ import annotations

import math
from dataclasses import dataclass

# Tsitouras 5(4), first-same-as-last.
TSIT5_C = (0.0, 0.161, 0.327, 0.9, 0.9800255409045097, 1.0, 1.0)

TSIT5_A = (
    (),
    (0.161,),
    (-0.008480655492356989, 0.335480655492357),
    (2.897153057105493, -6.359448489975075, 4.3622954328695815),
    (5.325864828439257, -11.748883564062828, 7.4955393428898365, -0.09249506636175525),
    (5.86145544294642, -12.92096931784711, 8.159367898576159, -0.071584973281401,
     -0.028269050394068383),
    (0.09646076681806523, 0.01, 0.4798896504144996, 1.379008574103742, -3.290069515436081,
     2.324710524099774),
)

TSIT5_B = TSIT5_A[6] + (0.0,)

# b - b_hat, the weights of the embedded error estimate
TSIT5_BTILDE = (
    -0.00178001105222577714,
    -0.0008164344596567469,
    0.007880878010261995,
    -0.1447110071732629,
    0.5823571654525552,
    -0.45808210592918697,
    1.0 / 66.0,
)


def tsit5_interp_weights(th: float) -> tuple[float, ...]:
    """Continuous-extension weights b_i(θ); u(t+θh) = u + h·Σ b_i(θ) k_i."""
    t2 = th * th
    return (
        -1.0530884977290216 * th * (th - 1.3299890189751412) * (t2 - 1.4364028541716351 * th + 0.7139816917074209),
        0.1017 * t2 * (t2 - 2.1966568338249754 * th + 1.2949852507374631),
        2.490627285651252793 * t2 * (t2 - 2.38535645472061657 * th + 1.57803468208092486),
        -16.54810288924490272 * (th - 1.21712927295533244) * (th - 0.61620406037800089) * t2,
        47.37952196281928122 * (th - 1.203071208372362603) * (th - 0.658047292653547382) * t2,
        -34.87065786149660974 * (th - 1.2) * (th - 0.666666666666666667) * t2,
        2.5 * (th - 1.0) * (th - 0.6) * t2,
    )


@dataclass(frozen=True)
class RKTableau:
    c: tuple
    A: tuple
    b: tuple
    btilde: tuple
    order: int

    @property
    def stages(self) -> int:
        return len(self.c)

    def A_dense(self) -> list[list[float]]:
        s = self.stages
        return [[(self.A[i][j] if j < len(self.A[i]) else 0.0) for j in range(s)] for i in range(s)]


TSIT5 = RKTableau(TSIT5_C, TSIT5_A, TSIT5_B, TSIT5_BTILDE, 5)


# Rosenbrock 2(3) W-method, L-stable, gamma = 1/(2+sqrt 2).
ROS23_D = 1.0 / (2.0 + math.sqrt(2.0))
ROS23_C32 = 6.0 + math.sqrt(2.0)


@dataclass(frozen=True)
class RosenbrockScheme:
    """Coupled form  (I - γhJ) K_i = h f(u + Σ α_ij K_j) + β_i h² f_t + hJ Σ β_ij K_j.

    ``beta[i][j]`` (j < i) are the off-diagonal couplings and ``gamma`` the
    diagonal, so β_i = γ + Σ_j β_ij. ``weights`` combine the K_i into the
    step and ``err_weights`` into the embedded error estimate.
    """

    gamma: float
    alpha: tuple
    beta: tuple
    weights: tuple
    err_weights: tuple

    @property
    def stages(self) -> int:
        return len(self.alpha)

    def alpha_sums(self) -> tuple:
        return tuple(sum(r) for r in self.alpha)

    def beta_sums(self) -> tuple:
        return tuple(sum(r) + self.gamma for r in self.beta)


def _ros23_scheme() -> RosenbrockScheme:
    d, c32 = ROS23_D, ROS23_C32
    # K_i = h k_i of the two-solve form used by the kernels
    return RosenbrockScheme(
        gamma=d,
        alpha=((), (0.5,), (0.0, 1.0)),
        beta=((), (-d,), (d * (c32 - 2.0), -c32 * d)),
        weights=(0.0, 1.0, 0.0),
        err_weights=(1.0 / 6.0, -2.0 / 6.0, 1.0 / 6.0),
    )


ROS23 = _ros23_scheme()
