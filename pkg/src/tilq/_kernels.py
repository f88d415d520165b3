"""Hot Monte-Carlo kernels: counter-based Gaussian increments and affine Euler-Maruyama.

Every kernel exists twice, as a numba ``@njit`` function and as a pure-numpy
function with the same operation order.  ``TILQ_BACKEND=numpy`` forces the
numpy path; the default is numba when it imports.

The generator is keyed by ``(seed, path, step, pair)``: a chain of SplitMix64
finalisers produces two 53-bit uniforms which a Box-Muller transform maps to
two standard normals.  Any single path can be regenerated in isolation.
"""
import math
import os

import numpy as np

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S8 = np.uint64(8)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi


def _select_backend():
    name = os.environ.get("TILQ_BACKEND", "").strip().lower()
    if name in ("", "auto"):
        return "numba" if HAVE_NUMBA else "numpy"
    if name not in ("numba", "numpy"):
        raise ValueError(f"TILQ_BACKEND must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise ImportError("TILQ_BACKEND=numba but numba is not importable")
    return name


BACKEND = _select_backend()


# ---------------------------------------------------------------------------
# numpy path


def _mix_np(z):
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def normal_increments_numpy(seed, path_ids, k0, n_steps, d, dt):
    """Brownian increments ``dW[p, k, j]`` for absolute steps ``k0 .. k0+n_steps-1``."""
    with np.errstate(over="ignore"):
        seed_key = _mix_np(np.uint64(seed))
        pkey = _mix_np(seed_key ^ np.asarray(path_ids, dtype=np.int64).astype(np.uint64))
        n_pairs = (d + 1) // 2
        steps = np.arange(k0, k0 + n_steps, dtype=np.uint64)
        q = np.arange(n_pairs, dtype=np.uint64)
        counter = (steps[:, None] << _S8) | q[None, :]
        h1 = _mix_np(pkey[:, None, None] ^ counter[None, :, :])
        h2 = _mix_np(h1)
        u1 = ((h1 >> _S11) + _ONE).astype(np.float64) * _INV53
        u2 = (h2 >> _S11).astype(np.float64) * _INV53
    r = np.sqrt(-2.0 * np.log(u1))
    ang = _TWO_PI * u2
    z = np.empty((len(pkey), n_steps, 2 * n_pairs))
    z[:, :, 0::2] = r * np.cos(ang)
    z[:, :, 1::2] = r * np.sin(ang)
    return math.sqrt(dt) * z[:, :, :d]


def affine_em_numpy(x0, a, f, c, g, dW, dt):
    """Euler-Maruyama for ``dX = (a X + f) ds + (c X + g)' dW`` with per-step coefficients."""
    n_paths, n_steps, d = dW.shape
    X = np.empty((n_paths, n_steps + 1))
    x = np.array(x0, dtype=np.float64, copy=True)
    X[:, 0] = x
    for k in range(n_steps):
        drift = (a[k] * x + f[k]) * dt
        diff = np.zeros(n_paths)
        for j in range(d):
            diff = diff + (c[k, j] * x + g[k, j]) * dW[:, k, j]
        x = x + drift + diff
        X[:, k + 1] = x
    return X


# ---------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _mix_nb(z):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    @numba.njit(cache=True, nogil=True)
    def _normals_nb(seed, path_ids, k0, n_steps, d, sqdt):
        n_paths = path_ids.shape[0]
        n_pairs = (d + 1) // 2
        out = np.empty((n_paths, n_steps, d))
        seed_key = _mix_nb(np.uint64(seed))
        two_pi = 2.0 * np.pi
        inv53 = 1.0 / 9007199254740992.0
        for p in range(n_paths):
            pkey = _mix_nb(seed_key ^ np.uint64(path_ids[p]))
            for k in range(n_steps):
                step = np.uint64(k0 + k)
                for q in range(n_pairs):
                    counter = (step << np.uint64(8)) | np.uint64(q)
                    h1 = _mix_nb(pkey ^ counter)
                    h2 = _mix_nb(h1)
                    u1 = np.float64((h1 >> np.uint64(11)) + np.uint64(1)) * inv53
                    u2 = np.float64(h2 >> np.uint64(11)) * inv53
                    r = np.sqrt(-2.0 * np.log(u1))
                    ang = two_pi * u2
                    out[p, k, 2 * q] = sqdt * (r * np.cos(ang))
                    if 2 * q + 1 < d:
                        out[p, k, 2 * q + 1] = sqdt * (r * np.sin(ang))
        return out

    @numba.njit(cache=True, nogil=True)
    def _affine_em_nb(x0, a, f, c, g, dW, dt):
        n_paths, n_steps, d = dW.shape
        X = np.empty((n_paths, n_steps + 1))
        for p in range(n_paths):
            x = x0[p]
            X[p, 0] = x
            for k in range(n_steps):
                drift = (a[k] * x + f[k]) * dt
                diff = 0.0
                for j in range(d):
                    diff = diff + (c[k, j] * x + g[k, j]) * dW[p, k, j]
                x = x + drift + diff
                X[p, k + 1] = x
        return X

    def normal_increments_numba(seed, path_ids, k0, n_steps, d, dt):
        ids = np.ascontiguousarray(path_ids, dtype=np.int64)
        return _normals_nb(np.uint64(seed), ids, int(k0), int(n_steps), int(d), math.sqrt(dt))

    def affine_em_numba(x0, a, f, c, g, dW, dt):
        return _affine_em_nb(
            np.ascontiguousarray(x0, dtype=np.float64), np.ascontiguousarray(a, dtype=np.float64),
            np.ascontiguousarray(f, dtype=np.float64), np.ascontiguousarray(c, dtype=np.float64),
            np.ascontiguousarray(g, dtype=np.float64), np.ascontiguousarray(dW, dtype=np.float64),
            float(dt))


def kernels(backend=None):
    """``(normal_increments, affine_em)`` for the requested (or configured) backend."""
    backend = backend or BACKEND
    if backend == "numba":
        if not HAVE_NUMBA:
            raise ImportError("numba backend requested but numba is not importable")
        return normal_increments_numba, affine_em_numba
    if backend == "numpy":
        return normal_increments_numpy, affine_em_numpy
    raise ValueError(f"unknown backend {backend!r}")


def normal_increments(seed, path_ids, k0, n_steps, d, dt):
    return kernels()[0](seed, path_ids, k0, n_steps, d, dt)


def affine_em(x0, a, f, c, g, dW, dt):
    return kernels()[1](x0, a, f, c, g, dW, dt)
