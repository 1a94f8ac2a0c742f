"""Compiled kernels against the pure-Python fallback, per scheme.

    python3 benchmarks/bench_backends.py [--n 16 --n 64] [--repeats 3]

Prints best-of-repeats wall time for both backends on one registry problem
per scheme, the speedup, and whether the two produced identical buffers.
"""

from __future__ import annotations

import argparse

from parensode import _backend
from parensode.bench import compare_backends, make_config
from parensode.problems import get

CASES = [
    ("lorenz", "tsit5", {}),
    ("lorenz", "tsit5", {"dt": None, "adaptive": True}),
    ("gbm", "em", {}),
    ("gbm", "siea", {}),
    ("rober", "rosenbrock23", {}),
    ("hires", "rosenbrock23", {}),
]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, action="append", help="trajectory counts (repeatable)")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    if not _backend.available():
        raise SystemExit("compiled extension not built; run `python3 setup.py build_ext --inplace`")
    ns = args.n or [16, 64]
    print(f"{'problem':8} {'scheme':13} {'mode':8} {'N':>5} {'native ms':>10} {'python ms':>10} {'speedup':>8}  identical")
    for name, algo, kw in CASES:
        entry = get(name)
        cfg = make_config(entry, algo, **kw)
        mode = "adaptive" if cfg.adaptive else "fixed"
        for n, tn, tp, same in compare_backends(entry, cfg, ns, args.repeats):
            print(f"{name:8} {algo:13} {mode:8} {n:>5} {tn:10.2f} {tp:10.2f} {tp / tn:8.1f}  {same}")


if __name__ == "__main__":
    main()
