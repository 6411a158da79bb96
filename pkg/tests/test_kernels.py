import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stabsaddle import _kernels_py, amdp, kernels, problems, solvers

BACKENDS = kernels.backends()
compiled = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")
    assert "python" in BACKENDS


def test_pure_python_override():
    env = dict(os.environ, STABSADDLE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from stabsaddle import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@given(st.lists(st.floats(0, 1), min_size=1, max_size=10), st.floats(0, 1, exclude_max=True))
def test_first_above_matches_linear_scan(weights, u):
    cum = np.cumsum(np.asarray(weights) + 1e-3)
    target = u * cum[-1]
    expect = next((i for i, c in enumerate(cum) if c > target), cum.size - 1)
    for mod in BACKENDS.values():
        assert mod.first_above(cum, target) == expect
        assert mod.sample_index(cum, u) == expect


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=12), st.floats(0.01, 10))
def test_clip_level_backends_agree(z, lam):
    z = np.asarray(z)
    ref = _kernels_py.inf_sq_clip_level(z, lam)
    for mod in BACKENDS.values():
        assert mod.inf_sq_clip_level(z, lam) == pytest.approx(ref, rel=1e-12, abs=1e-15)


@compiled
@pytest.mark.parametrize("amps", [(0.0, 0.0, 0.0), (0.2, 0.0, 0.0), (0.1, 0.3, 0.2)])
@pytest.mark.parametrize("shared", [True, False])
def test_bilinear_backends_agree(amps, shared):
    g = problems.random_game(4, 3, 1)
    nm = problems.NoiseModel.entrywise(g, *amps, shared=shared)
    params = solvers.SolverParams(0.05, 0.04, 0.3, 0.6, 3000, np.ones(4), -np.ones(3))
    a = solvers.cogda_run(g, nm, params, rng=2, kernel=BACKENDS["cython"])
    b = solvers.cogda_run(g, nm, params, rng=2, kernel=BACKENDS["python"])
    np.testing.assert_allclose(a.x_avg, b.x_avg, atol=1e-12)
    np.testing.assert_allclose(a.y_last, b.y_last, atol=1e-12)
    for ra, rb in zip(a.trace, b.trace):
        np.testing.assert_allclose(ra.row(solvers.TRACE_COLUMNS), rb.row(solvers.TRACE_COLUMNS), atol=1e-10)


@compiled
@pytest.mark.parametrize("rho_v", [0.0, 0.3])
def test_mdp_backends_agree(rho_v):
    mdp = amdp.random_mdp(4, 3, 2)
    runs = [amdp.comida_mdp_run(amdp.GenerativeSimulator(mdp, 9), 0.4, 0.1, rho_v, 2500,
                                kernel=BACKENDS[name]) for name in ("cython", "python")]
    np.testing.assert_allclose(runs[0].v_avg, runs[1].v_avg, atol=1e-12)
    np.testing.assert_allclose(runs[0].mu_avg, runs[1].mu_avg, atol=1e-12)
    assert runs[0].run.extra["suboptimality"] == pytest.approx(runs[1].run.extra["suboptimality"], abs=1e-10)


@compiled
def test_simulate_chain_backends_agree():
    mdp = amdp.random_mdp(3, 1, 0)
    cdf = mdp.transition_cdf()
    U = np.random.default_rng(0).random(20_000)
    c1, t1 = BACKENDS["cython"].simulate_chain(cdf, mdp.r_flat.copy(), 0, U)
    c2, t2 = BACKENDS["python"].simulate_chain(cdf, mdp.r_flat.copy(), 0, U)
    np.testing.assert_array_equal(c1, c2)
    assert t1 == pytest.approx(t2, rel=1e-12)
