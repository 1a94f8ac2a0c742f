"""Compiled kernels against the pure-Python fallback."""

import numpy as np
import pytest

from parensode import _backend, problems
from parensode.core import Algorithm, SaveSpec, SolveConfig
from parensode.ensemble import solve_ensemble_kernel
from parensode.linalg import lu_factor
from parensode.sde_kernels import NoiseStream, mix64, wiener_endpoint

from conftest import needs_native

pytestmark = needs_native


def _both(name, n, cfg):
    spec = problems.get(name).ensemble(n)
    a = solve_ensemble_kernel(spec, cfg, backend="native").buffers
    b = solve_ensemble_kernel(spec, cfg, backend="python").buffers
    return a, b


@pytest.mark.parametrize("name,n,cfg", [
    ("lorenz", 6, SolveConfig(Algorithm.Tsit5, adaptive=False, dt0=1e-3)),
    ("lorenz", 6, SolveConfig(Algorithm.Tsit5, abstol=1e-8, rtol=1e-8, saveat=SaveSpec.uniform(25))),
    ("linear_ode", 4, SolveConfig(Algorithm.Tsit5, abstol=1e-10, rtol=1e-10)),
    ("gbm", 16, SolveConfig(Algorithm.EM, adaptive=False, dt0=0.01)),
    ("gbm", 16, SolveConfig(Algorithm.SIEA, adaptive=False, dt0=0.01, saveat=SaveSpec.uniform(7))),
    ("crn", 8, SolveConfig(Algorithm.EM, adaptive=False, dt0=0.1)),
], ids=["lorenz-fixed", "lorenz-adaptive", "linear", "gbm-em", "gbm-siea", "crn-em"])
def test_explicit_schemes_bitwise(name, n, cfg):
    a, b = _both(name, n, cfg)
    assert a.same_as(b)


@pytest.mark.parametrize("name,tol", [("rober", 1e-8), ("hires", 1e-6)])
def test_rosenbrock_agrees_closely(name, tol):
    cfg = SolveConfig(Algorithm.Rosenbrock23, abstol=tol, rtol=tol, saveat=SaveSpec.uniform(10))
    a, b = _both(name, 3, cfg)
    assert (a.retcodes == b.retcodes).all()
    np.testing.assert_allclose(a.states, b.states, rtol=1e-6, atol=1e-12)


def test_mix_matches_python():
    for z in (0, 1, 2 ** 63, 2 ** 64 - 1, 0x123456789ABCDEF):
        assert _backend.native.mix(z) == mix64(z)


def test_normals_match_python():
    for traj in (0, 5, 1234):
        for step in (0, 1, 999):
            assert _backend.native.random_normals(7, traj, step, 5) == NoiseStream(7, traj).normals(5, step)


def test_wiener_endpoints_match_python():
    seeds = np.full(4, 11, dtype=np.uint64)
    out = np.zeros((4, 2))
    _backend.native.wiener_endpoints(seeds, 100, 2, 0.0, 1.0, 0.01, out)
    for i in range(4):
        assert list(out[i]) == wiener_endpoint(11, i, (0.0, 1.0), 0.01, 2)


def test_block_lu_matches_scalar():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(5, 4, 4))
    ref = [lu_factor(m.tolist()) for m in w]
    piv = np.zeros((5, 4), dtype=np.int32)
    sing = np.zeros(5, dtype=np.int32)
    _backend.native.block_lu(w, piv, sing, 0, 5)
    for i, r in enumerate(ref):
        np.testing.assert_allclose(w[i], np.array(r.lu), rtol=1e-14, atol=1e-15)
        assert list(piv[i]) == list(r.pivots)
    assert not sing.any()
