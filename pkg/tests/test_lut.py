import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parensode import ad
from parensode.core import InvalidSpec, ODESystem, ParseError, SaveSpec, SolveConfig
from parensode.lut import UniformTable, format_table, load_table, parse_table, sample, sample_nearest
from parensode.ode_kernels import solve

T1 = UniformTable((0.0,), (1.0,), (2,), (0.0, 10.0))


def test_node_and_midpoint():
    t = UniformTable.from_function(lambda x: x * x, (0.0,), (0.5,), (5,))
    for i in range(5):
        assert sample(t, 0.5 * i) == t.values[i]
    assert sample(T1, 0.5) == 5.0


def test_clamping():
    assert sample(T1, -3.0) == 0.0 and sample(T1, 7.0) == 10.0
    t2 = UniformTable.from_function(lambda x, y: x + 10 * y, (0.0, 0.0), (1.0, 1.0), (3, 4))
    assert sample(t2, (-1.0, -1.0)) == 0.0
    assert sample(t2, (9.0, 9.0)) == 2.0 + 30.0
    assert sample(t2, (1.0, 9.0)) == 1.0 + 30.0


def test_nearest():
    t = UniformTable((0.0,), (1.0,), (3,), (1.0, 2.0, 3.0))
    assert sample_nearest(t, 1.0) == 2.0
    assert sample_nearest(t, 0.5) == 1.0 and sample_nearest(t, 1.5) == 2.0
    assert sample_nearest(t, -4.0) == 1.0 and sample_nearest(t, 40.0) == 3.0
    t2 = UniformTable((0.0, 0.0), (1.0, 1.0), (2, 2), (1.0, 2.0, 3.0, 4.0))
    assert sample_nearest(t2, (0.5, 0.5)) == 1.0 and sample_nearest(t2, (0.9, 0.2)) == 3.0


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 8))
def test_affine_reproduction_1d(a, b, x):
    t = UniformTable.from_function(lambda s: a * s + b, (-1.0,), (0.25,), (21,))
    xc = min(max(x, -1.0), 4.0)
    assert abs(sample(t, x) - (a * xc + b)) <= 1e-12 * max(1.0, abs(a) * 4 + abs(b))


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 2), st.floats(0, 3))
def test_affine_reproduction_2d(a, b, c, x, y):
    t = UniformTable.from_function(lambda s, r: a * s + b * r + c, (0.0, 0.0), (0.5, 0.75), (5, 5))
    ref = a * x + b * y + c
    assert abs(sample(t, (x, y)) - ref) <= 1e-12 * max(1.0, abs(a) * 2 + abs(b) * 3 + abs(c))


def test_continuity_at_faces():
    rng = np.random.default_rng(0)
    t = UniformTable((0.0, 0.0), (1.0, 1.0), (4, 4), tuple(rng.standard_normal(16)))
    for i in (1, 2):
        for y in np.linspace(0, 3, 13):
            a = sample(t, (i - 1e-13, y))
            b = sample(t, (i + 1e-13, y))
            assert abs(a - b) <= 1e-11


def test_invalid_tables():
    with pytest.raises(InvalidSpec):
        UniformTable((0.0,), (0.0,), (2,), (1.0, 2.0))
    with pytest.raises(InvalidSpec):
        UniformTable((0.0,), (1.0,), (1,), (1.0,))
    with pytest.raises(InvalidSpec):
        UniformTable((0.0,), (1.0,), (2,), (1.0, math.nan))
    with pytest.raises(InvalidSpec):
        UniformTable((0.0,) * 3, (1.0,) * 3, (2,) * 3, (0.0,) * 8)
    with pytest.raises(InvalidSpec):
        sample(T1, (0.1, 0.2))


def test_text_round_trip(tmp_path):
    t = UniformTable.from_function(lambda x, y: x * y + 0.1, (0.5, -1.0), (0.25, 0.5), (3, 4))
    path = tmp_path / "grid.txt"
    path.write_text(format_table(t))
    assert load_table(path) == t


@pytest.mark.parametrize("text,line", [
    ("", 1), ("x 0 1 2\n1 2\n", 1), ("1 0 1\n1 2\n", 1), ("1 0 1 3\n1 2 abc\n", 2), ("1 0 1 3\n1 2\n", 1),
])
def test_parse_errors(text, line):
    with pytest.raises(ParseError) as e:
        parse_table(text)
    assert e.value.line == line


def test_dual_flows_through_sample():
    t = UniformTable.from_function(lambda x: 3.0 * x, (0.0,), (0.5,), (9,))
    d = sample(t, ad.Dual(1.2, (1.0,)))
    assert ad.value(d) == pytest.approx(3.6) and d.partials[0] == pytest.approx(3.0)


def test_ode_with_table():
    # rhs = -table(u) with the table holding f(x) = x; linear interpolation of an
    # affine function is exact, and the bound h²·max|f''|/8 is zero
    spacing = 0.05
    t = UniformTable.from_function(lambda x: x, (0.0,), (spacing,), (41,))
    sys = ODESystem(1, lambda u, p, tt: [-sample(t, u[0])])
    cfg = SolveConfig("tsit5", abstol=1e-10, rtol=1e-10, saveat=SaveSpec.uniform(11))
    tr = solve(sys, [1.0], (), (0.0, 1.0), cfg)
    ref = np.exp(-np.linspace(0, 1, 11))
    bound = spacing ** 2 * 0.0 / 8 + 1e-8
    assert np.max(np.abs(tr.u[:, 0] - ref)) <= bound


def test_ode_with_curved_table():
    # f(x) = x² tabulated: interpolation error ≤ spacing²·max|f''|/8 = spacing²/4
    spacing = 0.05
    t = UniformTable.from_function(lambda x: x * x, (0.0,), (spacing,), (41,))
    sys = ODESystem(1, lambda u, p, tt: [-sample(t, u[0])])
    cfg = SolveConfig("rosenbrock23", abstol=1e-10, rtol=1e-10, saveat=SaveSpec.uniform(11))
    tr = solve(sys, [1.0], (), (0.0, 1.0), cfg)
    ts = np.linspace(0, 1, 11)
    ref = 1.0 / (1.0 + ts)
    # with u' = -f(u) + δ, |δ| ≤ spacing²/4 and a contracting flow, the drift is at most t·δ
    assert np.max(np.abs(tr.u[:, 0] - ref) - ts * spacing ** 2 / 4) <= 1e-7
