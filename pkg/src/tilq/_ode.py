"""Fixed-step classical RK4 on the half grid.

Right-hand sides are called as ``rhs(j, y)`` with ``j`` a half-grid index:
node ``k`` is ``j = 2k`` and the midpoint of ``[s_k, s_{k+1}]`` is ``j = 2k + 1``.
"""
import numpy as np


def rk4_backward(rhs, y_T, n_steps, dt, check=None):
    """Integrate from ``s = T`` down to ``s = 0``.

    Returns ``(Y, F)``: states and right-hand sides at the ``n_steps + 1`` nodes.
    ``check(k, y)`` is called on every accepted node.
    """
    y = np.array(y_T, dtype=float)
    Y = np.empty((n_steps + 1, y.size))
    F = np.empty((n_steps + 1, y.size))
    Y[n_steps] = y
    if check is not None:
        check(n_steps, y)
    for k in range(n_steps - 1, -1, -1):
        j = 2 * k
        k1 = rhs(j + 2, y)
        F[k + 1] = k1
        k2 = rhs(j + 1, y - 0.5 * dt * k1)
        k3 = rhs(j + 1, y - 0.5 * dt * k2)
        k4 = rhs(j, y - dt * k3)
        y = y - (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        Y[k] = y
        if check is not None:
            check(k, y)
    F[0] = rhs(0, y)
    return Y, F


def rk4_forward(rhs, y0, k0, n_steps, dt):
    """Integrate from node ``k0`` up to node ``n_steps``; returns states at those nodes."""
    y = np.array(y0, dtype=float)
    Y = np.empty((n_steps - k0 + 1, y.size))
    Y[0] = y
    for k in range(k0, n_steps):
        j = 2 * k
        k1 = rhs(j, y)
        k2 = rhs(j + 1, y + 0.5 * dt * k1)
        k3 = rhs(j + 1, y + 0.5 * dt * k2)
        k4 = rhs(j + 2, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        Y[k - k0 + 1] = y
    return Y


def hermite_half(Y, F, dt):
    """Cubic Hermite dense output of node data onto the half grid (4th order at midpoints)."""
    Y = np.asarray(Y)
    F = np.asarray(F)
    out = np.empty((2 * len(Y) - 1, *Y.shape[1:]))
    out[0::2] = Y
    out[1::2] = 0.5 * (Y[:-1] + Y[1:]) + (dt / 8.0) * (F[:-1] - F[1:])
    return out
