"""Static log-log SVG charts of timing files.

The output is a pure function of the input series: fixed number formatting,
no timestamps, no random ids. Identical inputs give identical bytes.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path
from typing import Sequence, TextIO, Union
from xml.sax.saxutils import escape

from .core import ParseError

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 170, 30, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")

Series = tuple[str, list[tuple[float, float]]]


def parse_timing(text: str, name: str = "<input>", warn: TextIO | None = None) -> list[tuple[float, float]]:
    """Rows of ``N time_ms`` (whitespace) or the CSV twin; NaN rows are skipped."""
    warn = sys.stderr if warn is None else warn
    rows = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("n_trajectories"):
            continue
        toks = line.replace(",", " ").split()
        if len(toks) != 2:
            raise ParseError(f"{name}: expected two columns, got {len(toks)}", ln)
        try:
            n, ms = float(toks[0]), float(toks[1])
        except ValueError:
            raise ParseError(f"{name}: non-numeric value in {line!r}", ln) from None
        if math.isnan(n) or math.isnan(ms):
            print(f"warning: {name}:{ln}: NaN row skipped", file=warn)
            continue
        if n <= 0 or ms <= 0:
            raise ParseError(f"{name}: values must be positive for a log scale", ln)
        rows.append((n, ms))
    return rows


def load_series(paths: Sequence[Union[str, Path]], warn: TextIO | None = None) -> list[Series]:
    return [(Path(p).stem, parse_timing(Path(p).read_text(), str(p), warn)) for p in paths]


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _decades(lo: float, hi: float) -> list[int]:
    a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    if a == b:
        b = a + 1
    return list(range(a, b + 1))


def render_svg(series: Sequence[Series], title: str = "wall time vs trajectories",
               xlabel: str = "trajectories", ylabel: str = "time (ms)") -> str:
    pts = [p for _, s in series for p in s]
    if not pts:
        raise ParseError("no data points to plot")
    xd = _decades(min(p[0] for p in pts), max(p[0] for p in pts))
    yd = _decades(min(p[1] for p in pts), max(p[1] for p in pts))
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x: float) -> float:
        return MARGIN_L + pw * (math.log10(x) - xd[0]) / (xd[-1] - xd[0])

    def sy(y: float) -> float:
        return MARGIN_T + ph * (1.0 - (math.log10(y) - yd[0]) / (yd[-1] - yd[0]))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for d in xd:
        x = _fmt(sx(10.0 ** d))
        out.append(f'<line x1="{x}" y1="{MARGIN_T}" x2="{x}" y2="{MARGIN_T + ph}" stroke="#dddddd"/>')
        out.append(f'<text x="{x}" y="{MARGIN_T + ph + 16}" text-anchor="middle">1e{d}</text>')
    for d in yd:
        y = _fmt(sy(10.0 ** d))
        out.append(f'<line x1="{MARGIN_L}" y1="{y}" x2="{MARGIN_L + pw}" y2="{y}" stroke="#dddddd"/>')
        out.append(f'<text x="{MARGIN_L - 6}" y="{y}" text-anchor="end" dominant-baseline="middle">1e{d}</text>')
    out.append(f'<text x="{MARGIN_L + pw // 2}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{MARGIN_T + ph // 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN_T + ph // 2})">{escape(ylabel)}</text>')

    for k, (name, s) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        coords = [(_fmt(sx(x)), _fmt(sy(y))) for x, y in sorted(s)]
        if len(coords) > 1:
            path = " ".join(f"{x},{y}" for x, y in coords)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in coords:
            out.append(f'<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>')
        ly = MARGIN_T + 10 + 18 * k
        lx = WIDTH - MARGIN_R + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}" dominant-baseline="middle" class="legend">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
