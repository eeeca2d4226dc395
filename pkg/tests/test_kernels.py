import importlib
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mprntrack import _pykernels, kernels

ck = pytest.importorskip("mprntrack._ckernels", reason="compiled extension not built")


def _setup(seed, n=200, m=4):
    rng = np.random.default_rng(seed)
    pos = rng.normal([25000, 0, 0], 500, (n, 3))
    w = rng.uniform(0, 1, n)
    tx, rx = np.zeros(3), np.array([916.0, 941, 950])
    rhos = rng.normal(51000, 300, m)
    return rng, pos, w, tx, rx, rhos


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1.0, 300.0))
def test_likelihood_sums_parity(seed, sigma):
    _, pos, w, tx, rx, rhos = _setup(seed)
    np.testing.assert_allclose(
        ck.likelihood_sums(pos, w, tx, rx, rhos, sigma), _pykernels.likelihood_sums(pos, w, tx, rx, rhos, sigma),
        rtol=1e-12, atol=1e-300,
    )


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_update_factors_parity(seed, base):
    rng, pos, _, tx, rx, rhos = _setup(seed)
    coeffs = rng.exponential(1e4, len(rhos))
    np.testing.assert_allclose(
        ck.update_factors(pos, tx, rx, rhos, coeffs, 40.0, base),
        _pykernels.update_factors(pos, tx, rx, rhos, coeffs, 40.0, base),
        rtol=1e-12,
        atol=1e-290,  # subnormal tails differ in the last bits
    )


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.999999))
def test_systematic_indices_identical(seed, u0):
    w = np.random.default_rng(seed).exponential(1.0, 300)
    np.testing.assert_array_equal(ck.systematic_indices(w, u0), _pykernels.systematic_indices(w, u0))


def test_empty_measurement_sets():
    _, pos, w, tx, rx, _ = _setup(0)
    assert ck.likelihood_sums(pos, w, tx, rx, np.zeros(0), 5.0).size == 0
    np.testing.assert_array_equal(ck.update_factors(pos, tx, rx, np.zeros(0), np.zeros(0), 5.0, 0.3), 0.3)


@pytest.mark.parametrize("conv", [0, 1])
def test_lm_solve_parity(geometry, conv):
    rng = np.random.default_rng(conv)
    rx = np.ascontiguousarray(geometry.rx_positions)
    tx = geometry.tx_position
    from mprntrack.geom import bistatic_range, sph_to_cart

    for _ in range(20):
        x = sph_to_cart(rng.uniform(1e4, 6e4), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3))
        rho = np.array([bistatic_range(x, tx, r) for r in rx]) + rng.normal(0, 10, 5)
        p0 = np.array([np.mean(rho) / 2, 0.0, 0.0])
        args = (tx, tx, rx, rho, np.ones(5), p0, [True, True, True], conv, 200, 1e-10)
        pc = ck.lm_solve(*args)[0]
        pp = _pykernels.lm_solve(*args)[0]
        np.testing.assert_allclose(pc, pp, rtol=1e-7, atol=1e-9)


def test_backend_switch_by_environment():
    code = "import mprntrack.kernels as k; print(k.BACKEND)"
    env_py = {"MPRNTRACK_PURE_PYTHON": "1", "PATH": ""}
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env_py, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in ("cython", "python")
    importlib.reload(kernels)
