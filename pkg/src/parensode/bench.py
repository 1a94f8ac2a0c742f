"""Trajectory-count sweeps and their two-column timing files."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, TextIO

import numpy as np

from .core import (Algorithm, ExecModel, InvalidSpec, Precision, RetCode, SaveSpec, SolveConfig)
from .ensemble import Executor, solve_ensemble, time_ensemble
from .problems import ProblemEntry

DEFAULT_NMIN = 8
DEFAULT_NMAX = 2 ** 20
DEFAULT_GROWTH = 4
DEFAULT_REPEATS = 5
DEFAULT_SAVEAT = 2


@dataclass(frozen=True)
class SweepSpec:
    n_min: int = DEFAULT_NMIN
    n_max: int = DEFAULT_NMAX
    growth: int = DEFAULT_GROWTH
    repeats: int = DEFAULT_REPEATS
    model: ExecModel = ExecModel.Kernel
    algorithm: Optional[Algorithm] = None

    def points(self) -> list[int]:
        if self.n_min < 1:
            raise InvalidSpec("nmin must be >= 1")
        if self.growth < 2:
            raise InvalidSpec("growth must be >= 2")
        if self.n_min > self.n_max:
            raise InvalidSpec(f"empty sweep: nmin {self.n_min} > nmax {self.n_max}")
        out, n = [], self.n_min
        while n <= self.n_max:
            out.append(n)
            n *= self.growth
        return out


@dataclass
class SweepRow:
    n: int
    time_ms: float
    ok: bool
    stats: dict = field(default_factory=dict)


def make_config(entry: ProblemEntry, algorithm=None, adaptive: Optional[bool] = None,
                dt: Optional[float] = None, abstol: Optional[float] = None, rtol: Optional[float] = None,
                seed: int = 0, precision: str = "f64", saveat: Optional[int] = DEFAULT_SAVEAT,
                max_steps: int = 100_000) -> SolveConfig:
    """Registry defaults overlaid with whatever the caller sets.

    ``saveat`` is the number of uniform save points; 0 or ``None`` records
    every step.
    """
    algo = Algorithm.parse(algorithm) if algorithm is not None else entry.algorithm
    if dt is not None:
        adaptive = False if adaptive is None else adaptive
    if adaptive is None:
        adaptive = entry.adaptive and not algo.is_sde
    dt0 = dt if dt is not None else entry.dt0
    save = SaveSpec.uniform(saveat) if saveat else SaveSpec.every_step()
    return SolveConfig(algo, adaptive, dt0, entry.abstol if abstol is None else abstol,
                       entry.rtol if rtol is None else rtol, save, max_steps, base_seed=seed,
                       precision=Precision(precision))


def solution_digest(sol) -> dict:
    """Timing-free summary of an ensemble result (for determinism checks)."""
    b = sol.buffers
    h = hashlib.sha256()
    for a in (b.states, b.lengths, b.retcodes, b.stats, b.t_end):
        h.update(np.ascontiguousarray(a).tobytes())
    rc = np.bincount(b.retcodes, minlength=len(RetCode))
    return {
        "n": int(b.n_traj),
        "retcodes": {RetCode(i).name: int(c) for i, c in enumerate(rc) if c},
        "totals": [int(x) for x in b.stats.sum(axis=0)],
        "sha256": h.hexdigest(),
    }


def run_sweep(entry: ProblemEntry, sweep: SweepSpec, cfg: SolveConfig, exec: Executor,
              log: Optional[TextIO] = None) -> list[SweepRow]:
    rows = []
    events = entry.events() if entry.events is not None and sweep.model is ExecModel.Kernel else None
    for n in sweep.points():
        spec = entry.ensemble(n)
        holder = {}

        def call(spec=spec):
            holder["sol"] = solve_ensemble(spec, cfg, sweep.model, exec, events)

        try:
            ms = time_ensemble(call, sweep.repeats)
            sol = holder["sol"]
            bad = np.isin(sol.retcodes, (int(RetCode.Success), int(RetCode.Terminated)), invert=True)
            ok = not bad.any()
            row = SweepRow(n, ms if ok else math.nan, ok, solution_digest(sol))
        except Exception as e:  # one N failing must not kill the sweep
            row = SweepRow(n, math.nan, False, {"error": str(e)})
        if not row.ok and log is not None:
            print(f"warning: N={n} failed: {row.stats.get('error') or row.stats.get('retcodes')}", file=log)
        rows.append(row)
    return rows


def format_txt(rows: list[SweepRow]) -> str:
    return "".join(f"{r.n} {'NaN' if math.isnan(r.time_ms) else f'{r.time_ms:.6f}'}\n" for r in rows)


def format_csv(rows: list[SweepRow]) -> str:
    body = "".join(f"{r.n},{'NaN' if math.isnan(r.time_ms) else f'{r.time_ms:.6f}'}\n" for r in rows)
    return "n_trajectories,time_ms\n" + body


def write_outputs(rows: list[SweepRow], out: Path, fmt: str) -> list[Path]:
    """Write the requested format; a ``.txt`` result also gets its CSV twin."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        out.write_text(format_csv(rows))
        return [out]
    out.write_text(format_txt(rows))
    twin = out.with_suffix(".csv")
    twin.write_text(format_csv(rows))
    return [out, twin]


def parse_txt_line(line: str) -> tuple[int, float]:
    """Strict check of the two-column contract: integer, whitespace, real."""
    parts = line.split()
    if len(parts) != 2 or line != line.strip() or not parts[0].isdigit():
        raise ValueError(f"bad timing line {line!r}")
    return int(parts[0]), float(parts[1])


def compare_backends(entry: ProblemEntry, cfg: SolveConfig, ns: list[int], repeats: int = 3,
                     exec: Optional[Executor] = None) -> list[tuple[int, float, float, bool]]:
    """(N, native ms, python ms, identical buffers) for each N.

    Identical means bitwise-equal buffers. That holds for the explicit
    schemes; Rosenbrock23 can differ in the last bits on models whose
    Jacobian the two backends assemble in a different order.
    """
    from . import _backend
    from .ensemble import solve_ensemble_kernel

    if _backend.native is None:
        raise InvalidSpec("compiled extension not available")
    exec = exec or Executor.sequential()
    out = []
    for n in ns:
        spec = entry.ensemble(n)
        res = {}

        def nat(spec=spec):
            res["n"] = solve_ensemble_kernel(spec, cfg, exec, backend="native")

        def py(spec=spec):
            res["p"] = solve_ensemble_kernel(spec, cfg, exec, backend="python")

        tn = time_ensemble(nat, repeats)
        tp = time_ensemble(py, repeats)
        out.append((n, tn, tp, res["n"].buffers.same_as(res["p"].buffers)))
    return out
