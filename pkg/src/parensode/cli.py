"""``parensode`` command line: sweeps, convergence studies, plots and checks."""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click

from . import _backend
from .bench import (DEFAULT_GROWTH, DEFAULT_NMAX, DEFAULT_NMIN, DEFAULT_REPEATS, DEFAULT_SAVEAT, SweepSpec,
                    compare_backends, make_config, run_sweep, solution_digest, write_outputs)
from .core import ExecModel, ParensodeError, ParseError
from .ensemble import Executor, solve_ensemble
from .problems import REGISTRY, get, selfcheck

ALGOS = click.Choice(["tsit5", "rosenbrock23", "em", "siea"])


def _executor(threads: int | None) -> Executor:
    if threads is None:
        return Executor.from_env()
    return Executor.sequential() if threads <= 1 else Executor.parallel(threads)


def _fail(msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(2)


@click.group()
@click.version_option(package_name="parensode")
def main() -> None:
    """Ensemble ODE/SDE benchmark harness."""


@main.command()
@click.option("--problem", required=True, type=click.Choice(sorted(REGISTRY)))
@click.option("--algo", type=ALGOS, default=None, help="Defaults to the problem's registered scheme.")
@click.option("--model", type=click.Choice(["kernel", "array"]), default="kernel", show_default=True)
@click.option("--adaptive", "adaptive", flag_value=True, default=None, help="Adaptive stepping.")
@click.option("--fixed-dt", type=float, default=None, help="Fixed step size (disables adaptivity).")
@click.option("--abstol", type=float, default=None)
@click.option("--rtol", type=float, default=None)
@click.option("--nmin", type=int, default=DEFAULT_NMIN, show_default=True)
@click.option("--nmax", type=int, default=DEFAULT_NMAX, show_default=True)
@click.option("--growth", type=int, default=DEFAULT_GROWTH, show_default=True)
@click.option("--repeats", type=int, default=DEFAULT_REPEATS, show_default=True)
@click.option("--threads", type=int, default=None, help="Worker count [env PARENSODE_THREADS, else 1].")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--precision", type=click.Choice(["f32", "f64"]), default="f64", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Timing file [default: <problem>_<model>.txt].")
@click.option("--format", "fmt", type=click.Choice(["txt", "csv"]), default="txt", show_default=True)
@click.option("--saveat", type=int, default=DEFAULT_SAVEAT, show_default=True,
              help="Uniform save points per trajectory; 0 saves every step.")
@click.option("--stats", "stats_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Write per-N solution digests (JSON, no timings).")
def run(problem, algo, model, adaptive, fixed_dt, abstol, rtol, nmin, nmax, growth, repeats, threads, seed,
        precision, out, fmt, saveat, stats_path):
    """Time an ensemble at N = nmin·growth^k <= nmax trajectories."""
    if adaptive and fixed_dt is not None:
        _fail("--adaptive and --fixed-dt are mutually exclusive")
    try:
        entry = get(problem)
        cfg = make_config(entry, algo, adaptive, fixed_dt, abstol, rtol, seed, precision, saveat)
        sweep = SweepSpec(nmin, nmax, growth, repeats, ExecModel[model.capitalize()], cfg.algorithm)
        sweep.points()
    except ParensodeError as e:
        _fail(str(e))
    out = out or Path(f"{problem}_{model}.{fmt}")
    rows = run_sweep(entry, sweep, cfg, _executor(threads), log=sys.stderr)
    for r in rows:
        click.echo(f"{r.n:>9d} {r.time_ms:12.3f} ms" + ("" if r.ok else "  FAILED"))
    written = write_outputs(rows, out, fmt)
    if stats_path is not None:
        stats_path.write_text(json.dumps([r.stats | {"n": r.n} for r in rows], indent=1, sort_keys=True) + "\n")
    click.echo("wrote " + ", ".join(map(str, written)), err=True)
    if not all(r.ok for r in rows):
        sys.exit(1)


@main.command()
@click.option("--problem", type=click.Choice(["linear_ode", "gbm"]), required=True)
@click.option("--algo", type=ALGOS, required=True)
@click.option("--dt", "dts", type=float, multiple=True, help="Step sizes (repeatable).")
@click.option("--paths", type=int, default=100_000, show_default=True, help="Monte Carlo paths (gbm).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=None)
def convergence(problem, algo, dts, paths, seed, threads):
    """Error against the closed-form solution and the fitted log-log slope."""
    from .convergence import gbm_weak_errors, linear_errors

    try:
        if problem == "linear_ode":
            res = linear_errors(algo, dts) if dts else linear_errors(algo)
        else:
            res = gbm_weak_errors(algo, dts or None, paths, seed, _executor(threads))
    except ParensodeError as e:
        _fail(str(e))
    click.echo("dt error")
    for line in res.rows():
        click.echo(line)
    click.echo(f"slope {res.slope:.4f}")


@main.command()
@click.argument("files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=Path("scaling.svg"),
              show_default=True)
@click.option("--title", default="wall time vs trajectories", show_default=True)
def plot(files, out, title):
    """Log-log SVG of one or more timing files (one series each)."""
    from .plot import load_series, render_svg

    try:
        svg = render_svg(load_series(files), title)
    except ParseError as e:
        _fail(str(e))
    out.write_text(svg)
    click.echo(f"wrote {out}", err=True)


@main.command(name="selfcheck")
def selfcheck_cmd():
    """Re-evaluate every registered model at its initial condition."""
    ok_all = True
    for name, ok, msg in selfcheck():
        ok_all &= ok
        click.echo(f"{'ok  ' if ok else 'FAIL'} {name:14s} {msg}")
    sys.exit(0 if ok_all else 1)


@main.command(name="stiff-suite")
@click.option("--n", "n_traj", type=int, default=8192, show_default=True)
@click.option("--model", type=click.Choice(["kernel", "array"]), default="kernel", show_default=True)
@click.option("--threads", type=int, default=None)
@click.option("--repeats", type=int, default=1, show_default=True)
@click.option("--problems", default="pollu,hires,orego", show_default=True)
def stiff_suite(n_traj, model, threads, repeats, problems):
    """POLLU, HIRES and OREGO with Rosenbrock23 at N trajectories."""
    from .ensemble import time_ensemble

    exec = _executor(threads)
    failed = False
    for name in problems.split(","):
        entry = get(name.strip())
        cfg = make_config(entry, "rosenbrock23", True, None, None, None, 0, "f64", DEFAULT_SAVEAT)
        spec = entry.ensemble(n_traj)
        box = {}

        def call():
            box["s"] = solve_ensemble(spec, cfg, model, exec)

        ms = time_ensemble(call, repeats)
        d = solution_digest(box["s"])
        failed |= set(d["retcodes"]) != {"Success"}
        click.echo(f"{name:6s} N={n_traj} {model:6s} {ms:10.1f} ms  accepted={d['totals'][0]} {d['retcodes']}")
    sys.exit(1 if failed else 0)


@main.command(name="bench-backends")
@click.option("--problem", type=click.Choice(sorted(REGISTRY)), default="lorenz", show_default=True)
@click.option("--n", "ns", type=int, multiple=True, help="Trajectory counts (repeatable).")
@click.option("--repeats", type=int, default=3, show_default=True)
def bench_backends(problem, ns, repeats):
    """Compiled kernels against the pure-Python fallback."""
    if not _backend.available():
        _fail("compiled extension not built (or PARENSODE_BACKEND=python)")
    entry = get(problem)
    cfg = make_config(entry)
    click.echo(f"{'N':>7} {'native ms':>11} {'python ms':>11} {'speedup':>8}  identical")
    for n, tn, tp, same in compare_backends(entry, cfg, list(ns or (16, 64, 256)), repeats):
        click.echo(f"{n:>7} {tn:11.3f} {tp:11.3f} {tp / tn if tn > 0 else math.inf:8.1f}  {same}")


if __name__ == "__main__":  # pragma: no cover
    main()
