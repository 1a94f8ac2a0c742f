"""Fixed-step SDE kernels and the counter-based noise stream.

Every random number is a pure function of (seed, trajectory, substream,
step, slot), so results never depend on how trajectories are scheduled.
The mixing is integer-only and the Gaussian transform uses just log, sqrt,
cos and sin, which lets the compiled kernels reproduce the stream bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import (NoiseKind, RetCode, SDESystem, SolutionBuffers, SolveConfig, Stats,
                   UnsupportedNoise, fixed_step_count, validate_config)

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
TWO_PI = 6.283185307179586
INV_2_53 = 1.0 / 9007199254740992.0

SUB_GAUSS = 0
SUB_AUX = 1


def mix64(z: int) -> int:
    """splitmix64 finalizer: a bijection on 64-bit integers."""
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, trajectory: int, substream: int) -> int:
    return mix64(mix64(mix64(seed & MASK64) ^ (trajectory & MASK64)) ^ substream)


def counter_bits(key: int, step: int, slot: int) -> int:
    return mix64(key ^ mix64(((step << 16) | slot) & MASK64))


def uniform01(bits: int) -> float:
    """Uniform on (0, 1] from the top 53 bits."""
    return ((bits >> 11) + 1) * INV_2_53


@dataclass
class NoiseStream:
    base_seed: int
    trajectory_index: int
    step_counter: int = 0

    def __post_init__(self) -> None:
        self._kg = stream_key(self.base_seed, self.trajectory_index, SUB_GAUSS)
        self._ka = stream_key(self.base_seed, self.trajectory_index, SUB_AUX)

    def normals(self, m: int, step: Optional[int] = None) -> list[float]:
        """m standard normals for ``step`` (default: the current counter)."""
        s = self.step_counter if step is None else step
        key = self._kg
        out = []
        for pair in range((m + 1) // 2):
            u1 = uniform01(counter_bits(key, s, 2 * pair))
            u2 = uniform01(counter_bits(key, s, 2 * pair + 1))
            r = math.sqrt(-2.0 * math.log(u1))
            a = TWO_PI * u2
            out.append(r * math.cos(a))
            if len(out) < m:
                out.append(r * math.sin(a))
        return out

    def signs(self, count: int, step: Optional[int] = None) -> list[float]:
        """``count`` independent ±1 values from the auxiliary substream."""
        s = self.step_counter if step is None else step
        key = self._ka
        return [1.0 if counter_bits(key, s, j) >> 63 else -1.0 for j in range(count)]

    def advance(self) -> None:
        self.step_counter += 1


def gaussian_increments(stream: NoiseStream, m: int, h: float) -> list[float]:
    """m draws from N(0, h); advances the stream."""
    sq = math.sqrt(h)
    z = stream.normals(m)
    stream.advance()
    return [x * sq for x in z]


# ----------------------------------------------------------------------------
# steps
# ----------------------------------------------------------------------------


def em_step(sys: SDESystem, u: Sequence[float], p, t: float, h: float, dW: Sequence[float]) -> list:
    a = sys.drift(u, p, t)
    b = sys.diffusion(u, p, t)
    if sys.noise_kind is NoiseKind.Diagonal:
        return [x + h * ai + bi * w for x, ai, bi, w in zip(u, a, b, dW)]
    out = []
    for x, ai, row in zip(u, a, b):
        s = 0.0
        for bij, w in zip(row, dW):
            s += bij * w
        out.append(x + h * ai + s)
    return out


def siea_step(sys: SDESystem, u: Sequence[float], p, t: float, h: float, dW: Sequence[float],
              chi: Sequence[float], vsign: Sequence[float]) -> list:
    """Weak order 2 stochastic midpoint step for diagonal noise.

    The drift is taken at a predictor midpoint that includes a noise term
    ζ_j = ½ΔW_j + ½√h·χ_j (χ_j = ±1), which matches the second moment the
    weak Taylor expansion needs. Diffusion terms use the derivative-free
    supporting values Y + hA ± g_j√h e_j and Y ± g_r√h e_r. ``vsign`` holds
    the ±1 signs of the pairwise iterated-integral surrogates V_rj (r < j).
    With zero diffusion this is exactly the explicit midpoint rule.
    """
    if sys.noise_kind is not NoiseKind.Diagonal:
        raise UnsupportedNoise("SIEA supports diagonal noise only")
    n = len(u)
    drift, diff = sys.drift, sys.diffusion
    u = list(u)
    a = drift(u, p, t)
    g = diff(u, p, t)
    sq = math.sqrt(h)
    hh = 0.5 * h
    mid = [x + hh * ai + gi * (0.5 * w + 0.5 * sq * c) for x, ai, gi, w, c in zip(u, a, g, dW, chi)]
    am = drift(mid, p, t + hh)
    base = [x + h * ai for x, ai in zip(u, a)]
    out = [x + h * ai for x, ai in zip(u, am)]
    inv_sq = 1.0 / sq
    for j in range(n):
        gj = g[j]
        w = dW[j]
        d = gj * sq
        rp = list(base)
        rp[j] = base[j] + d
        rm = list(base)
        rm[j] = base[j] - d
        gp = diff(rp, p, t)[j]
        gm = diff(rm, p, t)[j]
        s1 = (gp + gm + 2.0 * gj) * w
        s2 = (gp - gm) * (w * w - h)
        for r in range(n):
            if r == j:
                continue
            dr = g[r] * sq
            up = list(u)
            up[r] = u[r] + dr
            um = list(u)
            um[r] = u[r] - dr
            hp = diff(up, p, t)[j]
            hm = diff(um, p, t)[j]
            if r < j:
                v = vsign[_pair(r, j, n)] * h
            else:
                v = -vsign[_pair(j, r, n)] * h
            s1 += (hp + hm - 2.0 * gj) * w * inv_sq
            s2 += (hp - hm) * (w * dW[r] + v)
        out[j] = out[j] + 0.25 * s1 + 0.25 * s2 * inv_sq
    return out


def _pair(r: int, j: int, n: int) -> int:
    """Index of the pair (r, j), r < j, in row-major upper-triangle order."""
    return r * (2 * n - r - 1) // 2 + (j - r - 1)


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


# ----------------------------------------------------------------------------
# driver
# ----------------------------------------------------------------------------


def sde_integrate(sys: SDESystem, u0: Sequence[float], p, tspan: tuple[float, float], cfg: SolveConfig,
                  sink: Optional[SolutionBuffers] = None, index: int = 0, seed: Optional[int] = None,
                  trajectory: Optional[int] = None, check: bool = True) -> RetCode:
    """Fixed-step EM or SIEA; the noise is keyed by (seed, trajectory)."""
    from .core import Algorithm

    if check:
        validate_config(cfg, sys)
    if sink is None:
        sink = SolutionBuffers(1, sys.dim, cfg, tspan)
        index = 0
    seed = cfg.base_seed if seed is None else seed
    trajectory = index if trajectory is None else trajectory
    stream = NoiseStream(seed, trajectory)
    siea = cfg.algorithm is Algorithm.SIEA
    t0, tf = float(tspan[0]), float(tspan[1])
    dt = cfg.dt0
    nsteps = fixed_step_count(tspan, dt)
    n, m = sys.dim, sys.noise_dim
    npairs = n_pairs(n)
    p = list(p)
    u = [float(x) for x in u0]
    t = t0
    stats = Stats()
    states = sink.states[index]
    times = sink.times[index] if sink.every else None
    grid = sink.grid
    cap = sink.cap
    states[0] = u
    if times is not None:
        times[0] = t
    k = 1
    ret = RetCode.Success
    for s in range(nsteps):
        if s >= cfg.max_steps:
            ret = RetCode.MaxIters
            break
        t_new = tf if s + 1 >= nsteps else t0 + (s + 1) * dt
        h = t_new - t
        sq = math.sqrt(h)
        dW = [z * sq for z in stream.normals(m, s)]
        if siea:
            aux = stream.signs(n + npairs, s)
            u_new = siea_step(sys, u, p, t, h, dW, aux[:n], aux[n:])
            stats.n_f_evals += 2
        else:
            u_new = em_step(sys, u, p, t, h, dW)
            stats.n_f_evals += 1
        stats.n_accept += 1
        if not all(math.isfinite(x) for x in u_new):
            ret = RetCode.Diverged
            break
        if times is not None:
            if k >= cap:
                ret = RetCode.MaxIters
                break
            states[k] = u_new
            times[k] = t_new
            k += 1
        else:
            while k < cap and grid[k] <= t_new:
                tg = grid[k]
                if tg == t_new:
                    states[k] = u_new
                else:
                    th = (tg - t) / h
                    states[k] = [(1.0 - th) * a + th * b for a, b in zip(u, u_new)]
                k += 1
        t, u = t_new, u_new
    stream.step_counter = nsteps
    sink.lengths[index] = k
    sink.retcodes[index] = int(ret)
    sink.t_end[index] = t
    sink.stats[index] = (stats.n_accept, stats.n_reject, stats.n_f_evals, 0, 0, 0)
    return ret


def sde_solve(sys: SDESystem, u0, p, tspan, cfg: SolveConfig, seed: Optional[int] = None, trajectory: int = 0):
    sink = SolutionBuffers(1, sys.dim, cfg, tspan)
    sde_integrate(sys, u0, p, tspan, cfg, sink, 0, seed, trajectory)
    return sink.trajectory(0)


def wiener_endpoint(seed: int, trajectory: int, tspan: tuple[float, float], dt: float, m: int) -> list[float]:
    """W(tf) - W(t0) assembled from the same increments :func:`sde_integrate` draws."""
    t0, tf = float(tspan[0]), float(tspan[1])
    nsteps = fixed_step_count(tspan, dt)
    stream = NoiseStream(seed, trajectory)
    w = [0.0] * m
    t = t0
    for s in range(nsteps):
        t_new = tf if s + 1 >= nsteps else t0 + (s + 1) * dt
        sq = math.sqrt(t_new - t)
        for j, z in enumerate(stream.normals(m, s)):
            w[j] += z * sq
        t = t_new
    return w
