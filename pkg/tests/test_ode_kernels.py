import math
import tracemalloc

import numpy as np
import pytest

from parensode.core import ODESystem, OutOfRange, RetCode, SaveSpec, SolveConfig, Stats
from parensode.ode_kernels import (hermite_interpolate, rosenbrock23_step, solve, tsit5_interpolate, tsit5_step)
from parensode.problems import LINEAR_SYS, get

ZERO = ODESystem(2, lambda u, p, t: [0.0 * u[0], 0.0 * u[1]])
ONE = ODESystem(1, lambda u, p, t: [1.0])
LIN = ODESystem(1, lambda u, p, t: [p[0] * u[0]])

# single Rosenbrock23 step on u' = λu from u = 1, values of the stability
# function R(z) = 2(z + √2 z + 2√2 + 3) / (z² − 4z − 2√2 z + 4√2 + 6),
# derived symbolically from the two-solve form and evaluated at 20 digits
R_AT_MINUS_1E6 = -4.8283824975776417453e-6
R_AT_MINUS_002 = 0.98019835560455324453


def test_tsit5_zero_rhs():
    out = tsit5_step(ZERO, [1.0, -2.0], (), 0.0, 0.3)
    assert out.u_new == [1.0, -2.0] and out.err == [0.0, 0.0]


def test_tsit5_constant_rhs_exact():
    out = tsit5_step(ONE, [0.0], (), 0.0, 0.5)
    # the double-precision weights sum to 1 - 2^-52, hence one ulp of slack
    assert abs(out.u_new[0] - 0.5) <= 2.0 ** -53
    assert abs(out.err[0]) <= 1e-16


def test_tsit5_exp_step():
    out = tsit5_step(LIN, [1.0], [1.0], 0.0, 0.1)
    assert abs(out.u_new[0] - math.exp(0.1)) <= 1e-9


def test_tsit5_fsal_bitwise_and_counts():
    sys = get("lorenz").system
    p = (10.0, 28.0, 8 / 3)
    u = [1.0, 2.0, 3.0]
    st1, st2 = Stats(), Stats()
    a = tsit5_step(sys, u, p, 0.0, 0.01, stats=st1)
    f0 = sys.rhs(u, p, 0.0)
    b = tsit5_step(sys, u, p, 0.0, 0.01, f_prev=f0, stats=st2)
    assert a.u_new == b.u_new and a.err == b.err
    assert (st1.n_f_evals, st2.n_f_evals) == (7, 6)
    assert a.f_new == sys.rhs(a.u_new, p, 0.01)


def test_rosenbrock_zero_rhs():
    out = rosenbrock23_step(ZERO, [1.0, -2.0], (), 0.0, 0.3)
    assert out.u_new == [1.0, -2.0] and out.err == [0.0, 0.0]


def test_rosenbrock_l_stable():
    out = rosenbrock23_step(LIN, [1.0], [-1e6], 0.0, 1.0)
    assert abs(out.u_new[0]) <= 1e-3
    assert out.u_new[0] == pytest.approx(R_AT_MINUS_1E6, rel=1e-9)


def test_rosenbrock_small_step():
    st = Stats()
    out = rosenbrock23_step(LIN, [1.0], [-2.0], 0.0, 0.01, stats=st)
    assert abs(out.u_new[0] - math.exp(-0.02)) <= 1e-6
    assert out.u_new[0] == pytest.approx(R_AT_MINUS_002, rel=1e-14)
    assert (st.n_jac_evals, st.n_factorizations) == (1, 1)


def test_rosenbrock_non_autonomous():
    # u' = cos t has u(h) = sin h; the ∂f/∂t term is what makes this 2nd order
    sys = ODESystem(1, lambda u, p, t: [__import__("parensode").ad.cos(t)])
    errs = []
    for h in (0.1, 0.05):
        errs.append(abs(rosenbrock23_step(sys, [0.0], (), 0.0, h).u_new[0] - math.sin(h)))
    assert errs[1] < errs[0] / 6


def test_rosenbrock_singular_flag():
    # W = 1 - hγλ vanishes at λ = 1/(hγ)
    from parensode.tableaus import ROS23_D
    out = rosenbrock23_step(LIN, [1.0], [1.0 / ROS23_D], 0.0, 1.0)
    assert out.failed


def _one_step_data(sys, p, h):
    out = tsit5_step(sys, [1.0], p, 0.0, h)
    return out


def test_interpolant_endpoints_bitwise():
    out = tsit5_step(LIN, [1.0], [1.0], 0.0, 0.2)
    assert tsit5_interpolate([1.0], out.u_new, 0.2, out.ks, 0.0) == [1.0]
    assert tsit5_interpolate([1.0], out.u_new, 0.2, out.ks, 1.0) == out.u_new
    r = rosenbrock23_step(LIN, [1.0], [1.0], 0.0, 0.2)
    f1 = LIN.rhs(r.u_new, [1.0], 0.2)
    assert hermite_interpolate([1.0], [1.0], r.u_new, f1, 0.2, 0.0) == [1.0]
    assert hermite_interpolate([1.0], [1.0], r.u_new, f1, 0.2, 1.0) == r.u_new
    with pytest.raises(OutOfRange):
        tsit5_interpolate([1.0], out.u_new, 0.2, out.ks, 1.5)
    with pytest.raises(OutOfRange):
        hermite_interpolate([1.0], [1.0], r.u_new, f1, 0.2, -0.1)


def test_interpolant_accuracy():
    h = 0.2
    out = tsit5_step(LIN, [1.0], [1.0], 0.0, h)
    worst = max(abs(tsit5_interpolate([1.0], out.u_new, h, out.ks, th)[0] - math.exp(th * h))
                for th in np.linspace(0, 1, 101))
    assert worst <= 1e-6


def test_lorenz_fixed_steps():
    e = get("lorenz")
    cfg = SolveConfig("tsit5", adaptive=False, dt0=0.001, saveat=SaveSpec.every_step())
    tr = solve(e.system, e.u0, e.p, e.tspan, cfg)
    assert tr.retcode is RetCode.Success
    assert tr.stats.n_accept == 1000 and len(tr.t) == 1001
    assert tr.t[-1] == 1.0 and tr.t[500] == 0.5


def test_robertson_conservation():
    e = get("rober")
    cfg = SolveConfig("rosenbrock23", abstol=1e-8, rtol=1e-8, saveat=SaveSpec.every_step())
    tr = solve(e.system, e.u0, e.p, e.tspan, cfg)
    assert tr.retcode is RetCode.Success and tr.t[-1] == 1e5
    assert np.max(np.abs(tr.u.sum(axis=1) - 1.0)) <= 1e-6


def test_adaptive_exp_decay():
    cfg = SolveConfig("tsit5", abstol=1e-10, rtol=1e-10, saveat=SaveSpec.uniform(2))
    tr = solve(LINEAR_SYS, [1.0], [-1.0], (0.0, 1.0), cfg)
    assert abs(tr.u[-1, 0] - math.exp(-1.0)) <= 1e-8
    assert tr.stats.n_reject >= 0 and tr.stats.n_accept > 5


def test_last_step_lands_on_tf():
    cfg = SolveConfig("tsit5", adaptive=False, dt0=0.3, saveat=SaveSpec.every_step())
    tr = solve(LINEAR_SYS, [1.0], [-1.0], (0.0, 1.0), cfg)
    assert list(tr.t) == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0], abs=1e-15) and tr.t[-1] == 1.0


def test_embedded_estimate_tracks_true_error():
    for dt in (1 / 64, 1 / 128, 1 / 256):
        out = tsit5_step(LIN, [1.0], [-1.0], 0.0, dt)
        # err = u - û estimates the local error of the embedded solution û
        true = abs(out.u_new[0] - out.err[0] - math.exp(-dt))
        est = abs(out.err[0])
        assert true / 10 <= est <= 10 * true


def test_convergence_rosenbrock_order():
    from parensode.convergence import fit_slope
    dts = [2.0 ** -k for k in range(6, 10)]
    errs = [abs(solve(LINEAR_SYS, [1.0], [-1.0], (0.0, 1.0),
                      SolveConfig("rosenbrock23", adaptive=False, dt0=dt, saveat=SaveSpec.uniform(2))).u[-1, 0]
                - math.exp(-1.0)) for dt in dts]
    assert 1.7 <= fit_slope(dts, errs) <= 3.2
    ratios = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(1.7 <= r <= 3.2 for r in ratios)


def test_deterministic_trajectory():
    e = get("orego")
    cfg = SolveConfig("rosenbrock23", abstol=1e-6, rtol=1e-6, saveat=SaveSpec.every_step())
    a = solve(e.system, e.u0, e.p, e.tspan, cfg)
    b = solve(e.system, e.u0, e.p, e.tspan, cfg)
    assert a.u.tobytes() == b.u.tobytes() and a.t.tobytes() == b.t.tobytes()


def test_max_steps_and_divergence():
    cfg = SolveConfig("tsit5", max_steps=10, saveat=SaveSpec.uniform(3))
    e = get("rober")
    tr = solve(e.system, e.u0, e.p, e.tspan, SolveConfig("tsit5", abstol=1e-8, rtol=1e-8, max_steps=10,
                                                           saveat=SaveSpec.uniform(3)))
    assert tr.retcode is RetCode.MaxIters
    blow = ODESystem(1, lambda u, p, t: [u[0] * u[0]])
    tr = solve(blow, [1.0], (), (0.0, 2.0), SolveConfig("tsit5", adaptive=False, dt0=0.1,
                                                          saveat=SaveSpec.uniform(2)))
    assert tr.retcode is RetCode.Diverged
    assert cfg.max_steps == 10


def test_dt_below_min():
    stiff = ODESystem(1, lambda u, p, t: [-1e9 * (u[0] - math.cos(t))])
    cfg = SolveConfig("tsit5", dtmin=1e-3, saveat=SaveSpec.uniform(2))
    assert solve(stiff, [0.0], (), (0.0, 1.0), cfg).retcode is RetCode.DtBelowMin


def test_bounded_allocation():
    """Working memory does not grow with the number of steps."""
    e = get("lorenz")

    def peak(dt):
        cfg = SolveConfig("tsit5", adaptive=False, dt0=dt, saveat=SaveSpec.uniform(4))
        from parensode.core import SolutionBuffers
        from parensode.ode_kernels import integrate
        sink = SolutionBuffers(1, 3, cfg, e.tspan)
        tracemalloc.start()
        integrate(e.system, e.u0, e.p, e.tspan, cfg, sink=sink)
        _, pk = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        return pk

    small, large = peak(1e-2), peak(1e-4)
    assert large <= 1.5 * small + 4096
