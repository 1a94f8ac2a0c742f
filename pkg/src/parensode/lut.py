"""Uniform-grid lookup tables with clamped multilinear interpolation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

from . import ad
from .core import InvalidSpec, ParseError

Coord = Union[float, Sequence[float]]


@dataclass(frozen=True)
class UniformTable:
    """Values on a rank-1 or rank-2 uniform grid, stored flat in row-major order."""

    origins: tuple
    spacings: tuple
    extents: tuple
    values: tuple

    def __post_init__(self) -> None:
        rank = len(self.extents)
        if rank not in (1, 2) or len(self.origins) != rank or len(self.spacings) != rank:
            raise InvalidSpec("table rank must be 1 or 2 with matching origin/spacing/extent")
        if any(not (s > 0 and math.isfinite(s)) for s in self.spacings):
            raise InvalidSpec("spacings must be positive")
        if any(e < 2 for e in self.extents):
            raise InvalidSpec("each extent must be >= 2")
        if len(self.values) != math.prod(self.extents):
            raise InvalidSpec(f"expected {math.prod(self.extents)} values, got {len(self.values)}")
        if not all(math.isfinite(v) for v in self.values):
            raise InvalidSpec("table values must be finite")

    @property
    def rank(self) -> int:
        return len(self.extents)

    @classmethod
    def from_function(cls, f, origins, spacings, extents) -> "UniformTable":
        origins, spacings, extents = tuple(origins), tuple(spacings), tuple(int(e) for e in extents)
        if len(extents) == 1:
            vals = [f(origins[0] + i * spacings[0]) for i in range(extents[0])]
        else:
            vals = [f(origins[0] + i * spacings[0], origins[1] + j * spacings[1])
                    for i in range(extents[0]) for j in range(extents[1])]
        return cls(origins, spacings, extents, tuple(float(v) for v in vals))

    def node(self, *idx: int) -> float:
        if self.rank == 1:
            return self.values[idx[0]]
        return self.values[idx[0] * self.extents[1] + idx[1]]


def _coords(table: UniformTable, x: Coord) -> tuple:
    xs = (x,) if table.rank == 1 and not isinstance(x, (tuple, list)) else tuple(x)
    if len(xs) != table.rank:
        raise InvalidSpec(f"rank-{table.rank} table queried with {len(xs)} coordinates")
    return xs


def _cell(x, origin: float, spacing: float, extent: int):
    """Clamped (cell index, fractional offset) along one axis.

    The offset stays a dual number when ``x`` is one, so tables can be used
    inside right-hand sides that get differentiated.
    """
    s = (x - origin) / spacing
    sv = ad.value(s)
    top = extent - 1
    if sv <= 0.0:
        return 0, 0.0
    if sv >= top:
        return top - 1, 1.0
    i = int(math.floor(sv))
    return i, s - i


def _lerp(a, b, f):
    if isinstance(f, float) and f == 0.0:
        return a
    if isinstance(f, float) and f == 1.0:
        return b
    return a + f * (b - a)


def sample(table: UniformTable, x: Coord):
    """Multilinear interpolation, clamped at the boundary."""
    xs = _coords(table, x)
    if table.rank == 1:
        i, f = _cell(xs[0], table.origins[0], table.spacings[0], table.extents[0])
        v = table.values
        return _lerp(v[i], v[i + 1], f)
    i, fx = _cell(xs[0], table.origins[0], table.spacings[0], table.extents[0])
    j, fy = _cell(xs[1], table.origins[1], table.spacings[1], table.extents[1])
    ny = table.extents[1]
    v = table.values
    v00 = v[i * ny + j]
    v01 = v[i * ny + j + 1]
    v10 = v[(i + 1) * ny + j]
    v11 = v[(i + 1) * ny + j + 1]
    return _lerp(_lerp(v00, v01, fy), _lerp(v10, v11, fy), fx)


def sample_nearest(table: UniformTable, x: Coord) -> float:
    """Value at the nearest node; exact ties go to the lower index."""
    xs = _coords(table, x)
    idx = []
    for xv, o, s, e in zip(xs, table.origins, table.spacings, table.extents):
        r = (ad.value(xv) - o) / s
        k = math.ceil(r - 0.5)
        idx.append(min(max(k, 0), e - 1))
    return table.node(*idx)


def load_table(path: Union[str, Path]) -> UniformTable:
    """Read ``rank origin(s) spacing(s) extent(s)`` then row-major values."""
    text = Path(path).read_text()
    return parse_table(text)


def parse_table(text: str) -> UniformTable:
    lines = [(n, ln.split()) for n, ln in enumerate(text.splitlines(), start=1)]
    lines = [(n, toks) for n, toks in lines if toks and not toks[0].startswith("#")]
    if not lines:
        raise ParseError("empty table file", 1)
    hdr_line, hdr = lines[0]
    try:
        rank = int(hdr[0])
    except ValueError:
        raise ParseError(f"bad rank {hdr[0]!r}", hdr_line) from None
    if rank not in (1, 2) or len(hdr) != 1 + 3 * rank:
        raise ParseError("header must be: rank origin(s) spacing(s) extent(s)", hdr_line)
    try:
        origins = tuple(float(v) for v in hdr[1:1 + rank])
        spacings = tuple(float(v) for v in hdr[1 + rank:1 + 2 * rank])
        extents = tuple(int(v) for v in hdr[1 + 2 * rank:])
    except ValueError as e:
        raise ParseError(str(e), hdr_line) from None
    values = []
    for n, toks in lines[1:]:
        for tok in toks:
            try:
                values.append(float(tok))
            except ValueError:
                raise ParseError(f"bad value {tok!r}", n) from None
    try:
        return UniformTable(origins, spacings, extents, tuple(values))
    except InvalidSpec as e:
        raise ParseError(str(e), hdr_line) from None


def format_table(table: UniformTable) -> str:
    hdr = [str(table.rank), *map(repr, table.origins), *map(repr, table.spacings), *map(str, table.extents)]
    lines = [" ".join(hdr)]
    row = table.extents[-1]
    vals = table.values
    for k in range(0, len(vals), row):
        lines.append(" ".join(repr(v) for v in vals[k:k + row]))
    return "\n".join(lines) + "\n"
