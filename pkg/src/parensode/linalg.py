"""Small dense linear algebra on plain Python sequences.

Everything here works on lists of floats (row-major lists of lists for
matrices) so the same code runs inside the per-trajectory Python kernels
without touching numpy.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Sequence

from .core import DimMismatch, SingularSystem

EPS = sys.float_info.epsilon
SINGULAR_SCALE = 1e3

Matrix = list[list[float]]


@dataclass
class LUFactors:
    """Packed LU with the unit lower triangle implicit.

    ``pivots[k]`` is the original row that ended up in row ``k``.
    """

    dim: int
    lu: Matrix
    pivots: list[int]
    singular: bool


def _as_rows(A) -> Matrix:
    rows = [list(map(float, r)) for r in A]
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise DimMismatch("matrix must be square")
    return rows


def lu_factor(A) -> LUFactors:
    """Partially pivoted LU. Near-zero pivots set ``singular`` instead of raising."""
    a = _as_rows(A)
    n = len(a)
    amax = 0.0
    for r in a:
        for x in r:
            ax = abs(x)
            if ax > amax:
                amax = ax
    tiny = SINGULAR_SCALE * EPS * amax
    piv = list(range(n))
    singular = amax == 0.0
    for k in range(n):
        p = k
        best = abs(a[k][k])
        for i in range(k + 1, n):
            v = abs(a[i][k])
            if v > best:
                best, p = v, i
        if p != k:
            a[k], a[p] = a[p], a[k]
            piv[k], piv[p] = piv[p], piv[k]
        if best < tiny or best == 0.0:
            singular = True
            continue
        inv = 1.0 / a[k][k]
        rk = a[k]
        for i in range(k + 1, n):
            ri = a[i]
            m = ri[k] * inv
            ri[k] = m
            if m != 0.0:
                for j in range(k + 1, n):
                    ri[j] -= m * rk[j]
    return LUFactors(n, a, piv, singular)


def lu_solve(F: LUFactors, b: Sequence[float]) -> list[float]:
    if F.singular:
        raise SingularSystem("matrix is singular to working precision")
    n = F.dim
    if len(b) != n:
        raise DimMismatch(f"rhs has length {len(b)}, expected {n}")
    lu = F.lu
    x = [b[F.pivots[i]] for i in range(n)]
    for i in range(n):
        row = lu[i]
        s = x[i]
        for j in range(i):
            s -= row[j] * x[j]
        x[i] = s
    for i in range(n - 1, -1, -1):
        row = lu[i]
        s = x[i]
        for j in range(i + 1, n):
            s -= row[j] * x[j]
        x[i] = s / row[i]
    return x


def lu_product(F: LUFactors) -> Matrix:
    """L·U, which equals the row-permuted input ``[A[p] for p in pivots]``."""
    n = F.dim
    lu = F.lu
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            s = lu[i][j] if i <= j else 0.0
            for k in range(min(i, j + 1)):
                s += lu[i][k] * lu[k][j]
            row.append(s)
        out.append(row)
    return out


def identity(n: int) -> Matrix:
    return [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]


def mat_vec(A: Sequence[Sequence[float]], v: Sequence[float]) -> list[float]:
    if len(A) and len(A[0]) != len(v):
        raise DimMismatch("matrix columns do not match vector length")
    out = []
    for row in A:
        s = 0.0
        for a, x in zip(row, v):
            s += a * x
        out.append(s)
    return out


def scale(c: float, v: Sequence[float]) -> list[float]:
    return [c * x for x in v]


def add(a: Sequence[float], b: Sequence[float]) -> list[float]:
    if len(a) != len(b):
        raise DimMismatch("vector lengths differ")
    return [x + y for x, y in zip(a, b)]


def lincomb(coeffs: Sequence[float], vecs: Sequence[Sequence[float]], base=None) -> list[float]:
    """``base + Σ c_j v_j`` in a single pass, terms added left to right."""
    if len(coeffs) != len(vecs) or len(vecs) > 8:
        raise DimMismatch("need matching coefficient and vector lists (at most 8)")
    n = len(base) if base is not None else len(vecs[0])
    if any(len(v) != n for v in vecs):
        raise DimMismatch("vector lengths differ")
    out = list(base) if base is not None else [0.0] * n
    for i in range(n):
        s = out[i]
        for c, v in zip(coeffs, vecs):
            s += c * v[i]
        out[i] = s
    return out


# ----------------------------------------------------------------------------
# batched (numpy) variant for block-diagonal systems
# ----------------------------------------------------------------------------


def batched_lu_factor(A):
    """Factor a stack of n×n matrices at once.

    Returns ``(lu, piv, singular)`` with shapes (N, n, n), (N, n) and (N,).
    Same pivoting rule and singularity test as :func:`lu_factor`, applied to
    every block independently.
    """
    import numpy as np

    a = np.array(A, dtype=np.float64, copy=True)
    N, n, _ = a.shape
    rows = np.arange(N)
    amax = np.abs(a).reshape(N, -1).max(axis=1)
    tiny = SINGULAR_SCALE * EPS * amax
    piv = np.tile(np.arange(n), (N, 1))
    singular = amax == 0.0
    for k in range(n):
        p = k + np.argmax(np.abs(a[:, k:, k]), axis=1)
        swap = p != k
        if swap.any():
            r = rows[swap]
            pk = p[swap]
            tmp = a[r, k, :].copy()
            a[r, k, :] = a[r, pk, :]
            a[r, pk, :] = tmp
            tp = piv[r, k].copy()
            piv[r, k] = piv[r, pk]
            piv[r, pk] = tp
        best = np.abs(a[:, k, k])
        bad = (best < tiny) | (best == 0.0)
        singular |= bad
        inv = 1.0 / np.where(bad, 1.0, a[:, k, k])
        m = a[:, k + 1:, k] * inv[:, None]
        m[bad] = 0.0
        a[:, k + 1:, k] = np.where(bad[:, None], a[:, k + 1:, k], m)
        a[:, k + 1:, k + 1:] -= m[:, :, None] * a[:, k, None, k + 1:]
    return a, piv, singular


def batched_lu_solve(lu, piv, B):
    """Solve every block system; ``B`` is (N, n)."""
    import numpy as np

    # accumulate in the same order as lu_solve so both agree bit for bit
    N, n, _ = lu.shape
    x = np.take_along_axis(np.asarray(B, dtype=np.float64), piv, axis=1)
    for i in range(n):
        s = x[:, i]
        for j in range(i):
            s -= lu[:, i, j] * x[:, j]
    for i in range(n - 1, -1, -1):
        s = x[:, i]
        for j in range(i + 1, n):
            s -= lu[:, i, j] * x[:, j]
        x[:, i] = s / lu[:, i, i]
    return x
