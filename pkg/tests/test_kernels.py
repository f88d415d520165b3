import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilq import _kernels

BACKENDS = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])


@pytest.mark.parametrize("backend", BACKENDS)
class TestNormals:
    def test_moments(self, backend):
        normals, _ = _kernels.kernels(backend)
        z = normals(7, np.arange(4000), 0, 100, 3, 1.0).reshape(-1, 3)
        n = len(z)
        assert np.all(np.abs(z.mean(axis=0)) <= 5 / np.sqrt(n))
        assert np.all(np.abs(z.var(axis=0) - 1) <= 5 * np.sqrt(2 / n))
        corr = np.corrcoef(z.T)
        assert np.max(np.abs(corr - np.eye(3))) <= 5 / np.sqrt(n)
        # fourth moment of a standard normal is 3
        assert abs(np.mean(z[:, 0] ** 4) - 3) <= 5 * np.sqrt(96 / n)

    def test_scaled_by_sqrt_dt(self, backend):
        normals, _ = _kernels.kernels(backend)
        a = normals(1, np.arange(5), 0, 4, 2, 1.0)
        b = normals(1, np.arange(5), 0, 4, 2, 0.01)
        np.testing.assert_allclose(b, 0.1 * a, rtol=1e-15)

    def test_paths_and_steps_addressable(self, backend):
        normals, _ = _kernels.kernels(backend)
        full = normals(42, np.arange(50), 0, 30, 3, 0.1)
        sub = normals(42, np.array([7, 31]), 0, 30, 3, 0.1)
        np.testing.assert_array_equal(sub, full[[7, 31]])
        tail = normals(42, np.arange(50), 12, 18, 3, 0.1)
        np.testing.assert_array_equal(tail, full[:, 12:])

    def test_seed_and_component_separation(self, backend):
        normals, _ = _kernels.kernels(backend)
        a = normals(42, np.arange(10), 0, 10, 4, 1.0)
        b = normals(43, np.arange(10), 0, 10, 4, 1.0)
        assert not np.any(a == b)
        # odd d keeps the same leading components
        c = normals(42, np.arange(10), 0, 10, 3, 1.0)
        np.testing.assert_array_equal(c, a[:, :, :3])


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")
class TestBackendsAgree:
    def test_normals_match(self):
        a = _kernels.normal_increments_numpy(2**63 + 5, np.arange(300), 3, 50, 3, 0.02)
        b = _kernels.normal_increments_numba(2**63 + 5, np.arange(300), 3, 50, 3, 0.02)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**64 - 1), n=st.integers(1, 40), d=st.integers(1, 4),
           x0=st.floats(-5, 5), scale=st.floats(0.01, 2.0))
    def test_em_bitwise(self, seed, n, d, x0, scale):
        rng = np.random.default_rng(seed % 2**32)
        a, f = scale * rng.normal(size=n), rng.normal(size=n)
        c, g = scale * rng.normal(size=(n, d)), rng.normal(size=(n, d))
        dW = _kernels.normal_increments_numpy(seed, np.arange(9), 0, n, d, 0.01)
        x = np.full(9, x0)
        np.testing.assert_array_equal(_kernels.affine_em_numpy(x, a, f, c, g, dW, 0.01),
                                      _kernels.affine_em_numba(x, a, f, c, g, dW, 0.01))


@pytest.mark.parametrize("backend", BACKENDS)
def test_em_against_loop(backend):
    _, em = _kernels.kernels(backend)
    rng = np.random.default_rng(3)
    n, d, dt = 12, 2, 0.05
    a, f = rng.normal(size=n), rng.normal(size=n)
    c, g = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    dW = rng.normal(size=(3, n, d)) * np.sqrt(dt)
    X = em(np.array([1.0, -2.0, 0.5]), a, f, c, g, dW, dt)
    for p, x in enumerate([1.0, -2.0, 0.5]):
        path = [x]
        for k in range(n):
            x = x + (a[k] * x + f[k]) * dt + sum((c[k, j] * x + g[k, j]) * dW[p, k, j] for j in range(d))
            path.append(x)
        np.testing.assert_allclose(X[p], path, rtol=1e-14, atol=1e-14)


def _backend_in_subprocess(value):
    env = dict(os.environ, TILQ_BACKEND=value)
    return subprocess.run([sys.executable, "-c", "from tilq import _kernels; print(_kernels.BACKEND)"],
                          env=env, capture_output=True, text=True)


def test_env_selects_numpy():
    out = _backend_in_subprocess("numpy")
    assert out.returncode == 0 and out.stdout.strip() == "numpy"


def test_env_rejects_unknown():
    out = _backend_in_subprocess("fortran")
    assert out.returncode != 0 and "TILQ_BACKEND" in out.stderr


def test_unknown_backend_name():
    with pytest.raises(ValueError):
        _kernels.kernels("cuda")
