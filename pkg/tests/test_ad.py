import math
import random

import mpmath
import numpy as np
import pytest

from parensode import ad
from parensode.ad import Dual, finite_difference_jacobian, jacobian, rhs_eval_counted, time_derivative
from parensode.core import NonFiniteDerivative, ODESystem, SDESystem, Stats
from parensode.problems import LORENZ_SYS, REGISTRY, ROBER_SYS


def test_identity_jacobian():
    J = jacobian(lambda u, p, t: [u[0], u[1], u[2]], [0.3, -1.0, 2.0], (), 0.0)
    assert J == [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]


def test_lorenz_jacobian():
    J = jacobian(LORENZ_SYS.rhs, [1.0, 0.0, 0.0], (10.0, 21.0, 8 / 3), 0.0)
    assert J == [[-10.0, 10.0, 0.0], [21.0, -1.0, -1.0], [0.0, 1.0, -8 / 3]]


def test_product_jacobian():
    J = jacobian(lambda u, p, t: [u[0] * u[0], u[0] * u[1]], [2.0, 3.0], (), 0.0)
    assert J == [[4.0, 0.0], [3.0, 2.0]]


def test_time_derivatives():
    assert time_derivative(LORENZ_SYS.rhs, [1.0, 2.0, 3.0], (10.0, 28.0, 8 / 3), 0.0) == [0.0, 0.0, 0.0]
    assert time_derivative(lambda u, p, t: [t * u[0]], [2.0], (), 5.0) == [2.0]
    assert time_derivative(lambda u, p, t: [ad.sin(t)], [0.0], (), 0.0) == [1.0]


def test_counted_rhs():
    st = Stats()
    assert rhs_eval_counted(LORENZ_SYS, [1.0, 0.0, 0.0], (10.0, 21.0, 8 / 3), 0.0, st) == [-10.0, 21.0, 0.0]
    assert rhs_eval_counted(LORENZ_SYS, [1.0, 1.0, 1.0], (10.0, 21.0, 8 / 3), 0.0, st) == [0.0, 19.0, 1 - 8 / 3]
    assert rhs_eval_counted(ROBER_SYS, [1.0, 0.0, 0.0], (0.04, 3e7, 1e4), 0.0, st) == [-0.04, 0.04, 0.0]
    assert st.n_f_evals == 3


def test_dual_arithmetic_rules():
    a = Dual(3.0, (1.0, 0.0))
    b = Dual(2.0, (0.0, 1.0))
    assert (a * b).partials == (2.0, 3.0) or list((a * b).partials) == [2.0, 3.0]
    q = a / b
    assert ad.value(q) == 1.5 and list(q.partials) == [0.5, -0.75]
    assert list((2.0 - a).partials) == [-1.0, 0.0]
    assert list((a ** 2).partials) == [6.0, 0.0]
    e = ad.exp(a)
    assert list(e.partials) == [math.exp(3.0), 0.0]
    s = ad.sqrt(b)
    assert list(s.partials) == pytest.approx([0.0, 0.5 / math.sqrt(2.0)])
    assert a > b and b < 3.0 and float(a) == 3.0


def test_nonfinite_partial_raises():
    with pytest.raises(NonFiniteDerivative):
        jacobian(lambda u, p, t: [ad.sqrt(u[0])], [0.0], (), 0.0)


def _central_differences(f, u, p, t):
    """Central differences with step 1e-6·max(1, |u_j|), evaluated in 40-digit
    arithmetic so that cancellation against large rate constants (POLLU has
    k up to 4.4e11) does not swamp the oracle."""
    with mpmath.workdps(40):
        um = [mpmath.mpf(x) for x in u]
        cols = []
        for j in range(len(u)):
            h = mpmath.mpf(1e-6) * max(1.0, abs(u[j]))
            a, b = list(um), list(um)
            a[j] += h
            b[j] -= h
            cols.append([(x - y) / (2 * h) for x, y in zip(f(a, p, t), f(b, p, t))])
        return np.array([[float(cols[j][i]) for j in range(len(u))] for i in range(len(cols[0]))])


def test_float_fd_helper_on_lorenz():
    u, p = [1.3, -0.7, 2.2], (10.0, 28.0, 8 / 3)
    F = np.array(finite_difference_jacobian(LORENZ_SYS.rhs, u, p, 0.0))
    assert np.allclose(F, jacobian(LORENZ_SYS.rhs, u, p, 0.0), atol=1e-7)


def _probe(rng, entry):
    u = [x * (1.0 + 0.2 * rng.uniform(-1, 1)) + 0.05 * rng.random() for x in entry.u0]
    return u, entry.p, rng.uniform(*entry.tspan)


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_ad_matches_finite_differences(name):
    entry = REGISTRY[name]
    sys = entry.system
    f = sys.rhs if isinstance(sys, ODESystem) else sys.drift
    rng = random.Random(hash(name) & 0xFFFF)
    for _ in range(100):
        u, p, t = _probe(rng, entry)
        J = np.array(jacobian(f, u, p, t))
        F = _central_differences(f, u, p, t)
        ok = (np.abs(J - F) <= 1e-4) | (np.abs(J - F) <= 1e-5 * np.abs(F))
        assert ok.all(), (name, u, J, F)


@pytest.mark.parametrize("name", ["lorenz", "rober", "orego", "hires", "pollu"])
def test_analytic_jacobian_agrees(name):
    entry = REGISTRY[name]
    sys = entry.system
    rng = random.Random(5)
    for _ in range(20):
        u, p, t = _probe(rng, entry)
        assert np.allclose(jacobian(sys.rhs, u, p, t), sys.analytic_jacobian(u, p, t), rtol=1e-13, atol=1e-13)


def test_linear_system_exact():
    rng = np.random.default_rng(0)
    for n in (1, 4, 16, 32):
        A = rng.standard_normal((n, n))

        def rhs(u, p, t, A=A):
            return [sum(A[i, j] * u[j] for j in range(len(u))) for i in range(len(u))]

        J = np.array(jacobian(rhs, list(rng.standard_normal(n)), (), 0.0))
        assert np.allclose(J, A, rtol=0, atol=1e-14)


def test_seed_width_consistency():
    # differentiating one coordinate at a time yields the same columns as the full seed
    f = LORENZ_SYS.rhs
    u, p = [1.3, -0.7, 2.2], (10.0, 28.0, 8 / 3)
    J = jacobian(f, u, p, 0.0)
    for j in range(3):
        ud = [Dual(x, (1.0,)) if k == j else x for k, x in enumerate(u)]
        col = [fi.partials[0] if isinstance(fi, Dual) else 0.0 for fi in f(ud, p, 0.0)]
        assert col == [J[i][j] for i in range(3)]


def test_sde_drift_differentiable():
    sys = REGISTRY["crn"].system
    assert isinstance(sys, SDESystem)
    J = jacobian(sys.drift, [0.2, 0.3, 0.4, 0.5], REGISTRY["crn"].p, 0.0)
    assert all(math.isfinite(x) for row in J for x in row)
