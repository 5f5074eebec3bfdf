import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

import extentlab._kernels as kernels
from extentlab._kernels import _pykernels as py
import oracles

try:
    from extentlab._kernels import _ckernels as cy
except ImportError:  # pragma: no cover - compiled extension not built
    cy = None

BACKENDS = [py] + ([cy] if cy is not None else [])


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("mod", BACKENDS)
def test_ar1_matches_loop(mod):
    rng = np.random.default_rng(0)
    z = rng.normal(size=(4, 3, 20))
    rho, sd = rng.uniform(-0.9, 0.95, 4), rng.uniform(0.5, 3, 4)
    sd0 = sd / np.sqrt(1 - rho ** 2)
    np.testing.assert_array_equal(mod.ar1_anomalies(z, rho, sd, sd0), oracles.ar1_loop(z, rho, sd, sd0))


@pytest.mark.skipif(cy is None, reason="compiled kernels not built")
def test_backends_are_bit_identical():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(30, 5, 153))
    rho, sd = rng.uniform(0, 0.95, 30), rng.uniform(0.5, 3, 30)
    sd0 = sd / np.sqrt(1 - rho ** 2)
    assert np.array_equal(cy.ar1_anomalies(z, rho, sd, sd0), py.ar1_anomalies(z, rho, sd, sd0))
    d = rng.normal(size=(30, 5, 153))
    for lo, hi in [(0, 0), (0, 1), (-1, 1)]:
        assert np.array_equal(cy.persist_indicator(d, 0.3, lo, hi), py.persist_indicator(d, 0.3, lo, hi))


@pytest.mark.parametrize("mod", BACKENDS)
@settings(max_examples=60, deadline=None)
@given(d=hnp.arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(0, 9)),
                    elements=st.floats(-3, 3, allow_nan=False)),
       c=st.sampled_from([0.0, 1.0, 2.0]), k=st.sampled_from([1, 2, 3]))
def test_persistence_matches_definition(mod, d, c, k):
    lo, hi = {1: (0, 0), 2: (0, 1), 3: (-1, 1)}[k]
    assert np.array_equal(mod.persist_indicator(d, c, lo, hi), oracles.persistence_loop(d, c, k))


@pytest.mark.parametrize("mod", BACKENDS)
def test_persistence_rejects_bad_windows(mod):
    with pytest.raises(ValueError):
        mod.persist_indicator(np.zeros((2, 3)), 0.0, 1, 2)


@pytest.mark.parametrize("mod", BACKENDS)
def test_zero_innovation_sd_gives_zero_anomalies(mod):
    z = np.random.default_rng(2).normal(size=(2, 2, 10))
    out = mod.ar1_anomalies(z, np.array([0.9, -0.5]), np.zeros(2), np.zeros(2))
    assert np.all(out == 0)


def test_pure_python_switch():
    code = "import extentlab._kernels as k; print(k.BACKEND)"
    env = dict(os.environ, EXTENTLAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
