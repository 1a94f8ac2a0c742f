"""Empirical convergence orders against closed-form references."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _backend
from .core import Algorithm, EnsembleSpec, InvalidSpec, SaveSpec, SolveConfig, fixed_step_count
from .ensemble import Executor, solve_ensemble_kernel
from .ode_kernels import solve
from .problems import GBM_SYS, LINEAR_SYS
from .sde_kernels import wiener_endpoint

LINEAR_DTS = tuple(2.0 ** -k for k in range(2, 7))
GBM_DTS = {
    Algorithm.EM: tuple(2.0 ** -k for k in range(3, 8)),
    Algorithm.SIEA: tuple(2.0 ** -k for k in range(2, 6)),
}

# GBM settings used throughout: r, V, X0, T
GBM_R, GBM_V, GBM_X0, GBM_T = 1.5, 0.01, 0.1, 1.0


@dataclass
class ConvergenceResult:
    dts: list
    errors: list
    slope: float

    def rows(self) -> list[str]:
        return [f"{dt:.10g} {e:.6e}" for dt, e in zip(self.dts, self.errors)]


def fit_slope(dts: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    x = np.log(np.asarray(dts, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    if len(x) < 2 or not np.all(np.isfinite(y)):
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


def linear_errors(algorithm, dts: Sequence[float] = LINEAR_DTS, lam: float = -1.0) -> ConvergenceResult:
    """Fixed-step global error at t=1 on u' = λu, u(0) = 1."""
    algo = Algorithm.parse(algorithm)
    if algo.is_sde:
        raise InvalidSpec("linear_ode needs an ODE algorithm")
    exact = math.exp(lam)
    errs = []
    for dt in dts:
        cfg = SolveConfig(algo, adaptive=False, dt0=dt, saveat=SaveSpec.uniform(2))
        tr = solve(LINEAR_SYS, [1.0], [lam], (0.0, 1.0), cfg)
        errs.append(abs(float(tr.u[-1, 0]) - exact))
    return ConvergenceResult(list(dts), errs, fit_slope(dts, errs))


def gbm_spec(paths: int) -> EnsembleSpec:
    return EnsembleSpec(GBM_SYS, (GBM_X0,) * 3, (0.0, GBM_T), paths, None, (GBM_R, GBM_V))


def _wiener(n: int, seed: int, dt: float, m: int) -> np.ndarray:
    tspan = (0.0, GBM_T)
    if _backend.native is not None:
        out = np.zeros((n, m))
        seeds = np.full(n, seed & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64)
        _backend.native.wiener_endpoints(seeds, fixed_step_count(tspan, dt), m, 0.0, GBM_T, dt, out)
        return out
    return np.array([wiener_endpoint(seed, i, tspan, dt, m) for i in range(n)])


def gbm_weak_error(algorithm, dt: float, paths: int, seed: int = 0,
                   exec: Optional[Executor] = None) -> tuple[float, float]:
    """Weak error of E[X(T)] and its standard error.

    Each simulated path is paired with the exact solution driven by the same
    Brownian path, X0·exp((r - V²/2)T + V·W(T)). The mean of the paired
    difference is an unbiased estimate of the weak error whose variance is
    the (small) strong error, not the spread of X(T) itself.
    """
    algo = Algorithm.parse(algorithm)
    cfg = SolveConfig(algo, adaptive=False, dt0=dt, saveat=SaveSpec.uniform(2), base_seed=seed)
    sol = solve_ensemble_kernel(gbm_spec(paths), cfg, exec)
    xT = sol.final_states().astype(float)
    W = _wiener(paths, seed, dt, 3)
    exact = GBM_X0 * np.exp((GBM_R - 0.5 * GBM_V ** 2) * GBM_T + GBM_V * W)
    d = (xT - exact).ravel()
    return abs(float(d.mean())), float(d.std(ddof=1) / math.sqrt(d.size))


def gbm_weak_errors(algorithm, dts: Optional[Sequence[float]] = None, paths: int = 100_000, seed: int = 0,
                    exec: Optional[Executor] = None) -> ConvergenceResult:
    algo = Algorithm.parse(algorithm)
    if not algo.is_sde:
        raise InvalidSpec("gbm needs an SDE algorithm")
    dts = list(GBM_DTS[algo] if dts is None else dts)
    errs = [gbm_weak_error(algo, dt, paths, seed, exec)[0] for dt in dts]
    return ConvergenceResult(dts, errs, fit_slope(dts, errs))


def gbm_mean(algorithm, dt: float, paths: int, seed: int = 0, exec: Optional[Executor] = None):
    """(sample mean of X(T) over all components, its standard error, exact mean X0·e^{rT})."""
    algo = Algorithm.parse(algorithm)
    cfg = SolveConfig(algo, adaptive=False, dt0=dt, saveat=SaveSpec.uniform(2), base_seed=seed)
    x = solve_ensemble_kernel(gbm_spec(paths), cfg, exec).final_states().astype(float).ravel()
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), GBM_X0 * math.exp(GBM_R * GBM_T)
