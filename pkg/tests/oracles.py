"""Independent reference computations used by the tests.

Nothing here imports the solver modules; coefficients are read straight from
the problem arrays and interpolated with ``np.interp``.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

RTOL = 1e-12
ATOL = 1e-13


def interp_coeffs(spec, s):
    """Linearly interpolated coefficient arrays at a single time ``s``."""
    pts = spec.grid.points

    def f(name):
        arr = getattr(spec, name)
        flat = arr.reshape(len(pts), -1)
        out = np.array([np.interp(s, pts, flat[:, j]) for j in range(flat.shape[1])])
        return out.reshape(arr.shape[1:])

    names = ("A", "B1", "B2", "C", "D1", "D2", "b", "sigma", "Q1", "Q2", "R1", "R2")
    c = {k: f(k) for k in names}
    l = spec.l
    R = np.zeros((2 * l, 2 * l))
    R[:l, :l], R[l:, l:] = c["R1"], c["R2"]
    c["R"] = R
    c["B"] = np.concatenate([c["B1"], c["B2"]])
    c["D"] = np.concatenate([c["D1"], c["D2"]], axis=1)
    return c


def _backward(rhs, yT, T, nodes):
    """Integrate ``y' = rhs(s, y)`` from ``s = T`` down to 0, restarting at every node.

    Coefficients are only piecewise smooth (kinks at the nodes), so each
    interval is a separate smooth DOP853 solve.  Returns values at ``nodes``.
    """
    out = np.empty((len(nodes), len(yT)))
    out[-1] = yT
    for k in range(len(nodes) - 1, 0, -1):
        res = solve_ivp(rhs, (nodes[k], nodes[k - 1]), out[k], method="DOP853", rtol=RTOL, atol=ATOL)
        assert res.success, res.message
        out[k - 1] = res.y[:, -1]
    return out


# ---------------------------------------------------------------------------
# scalar classical LQ


def scalar_lq_riccati(A, B, C, D, Q, R, G, T, h=1e-5):
    """Fixed-step backward RK4 for ``P' = -(2A+C^2)P - Q + P^2 (B+CD)^2 / (R + P D^2)``.

    Returns ``(times, P)`` on the fine grid of step ``h``.
    """
    n = int(round(T / h))
    f = lambda P: -(2 * A + C * C) * P - Q + (P * (B + C * D)) ** 2 / (R + P * D * D)  # noqa: E731
    P = np.empty(n + 1)
    P[n] = G
    y = G
    for k in range(n, 0, -1):
        k1 = f(y)
        k2 = f(y - 0.5 * h * k1)
        k3 = f(y - 0.5 * h * k2)
        k4 = f(y - h * k3)
        y = y - h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        P[k - 1] = y
    return np.linspace(0.0, T, n + 1), P


# ---------------------------------------------------------------------------
# unreduced equilibrium system


def _blocks(spec, c, M1, M2, N1, N2, g1, g2):
    l = spec.l
    m = np.repeat([M1, M2], l)
    nn = np.repeat([N1, N2], l)
    gg = np.repeat([g1, g2], l)
    D = c["D"]
    K = c["R"] + m[:, None] * (D.T @ D)
    DC = D.T @ c["C"]
    alpha = -np.linalg.solve(K, (m - nn - gg) * c["B"] + m * DC)
    return m, K, DC, alpha


def unreduced_system(spec):
    """``(M1, M2, N1, N2, Gam1, Gam2, Phi1, Phi2)`` on the grid by DOP853.

    Every player's coefficients obey the linear adjoint equations of the
    affine ansatz, with the equilibrium feedback closing the loop:

        M_i' = -(2A+|C|^2) M_i - Q_i - M_i (B+D'C).alpha
        N_i' = -2A N_i - N_i B.alpha
        Gam_i' = -A Gam_i
        Phi_i' = -A Phi_i - (M_i-N_i)(B.beta+b) - M_i C.(D beta + sigma)
    """
    def rhs(s, y):
        M1, M2, N1, N2, g1, g2, p1, p2 = y
        c = interp_coeffs(spec, s)
        m, K, DC, alpha = _blocks(spec, c, M1, M2, N1, N2, g1, g2)
        phi = np.repeat([p1, p2], spec.l)
        beta = -np.linalg.solve(K, phi * c["B"] + m * (c["D"].T @ c["sigma"]))
        A, C = c["A"], c["C"]
        C2 = C @ C
        BDa = (c["B"] + DC) @ alpha
        Ba = c["B"] @ alpha
        drift = c["B"] @ beta + c["b"]
        diff = C @ (c["D"] @ beta + c["sigma"])
        return [
            -(2 * A + C2) * M1 - c["Q1"] - M1 * BDa,
            -(2 * A + C2) * M2 - c["Q2"] - M2 * BDa,
            -2 * A * N1 - N1 * Ba,
            -2 * A * N2 - N2 * Ba,
            -A * g1,
            -A * g2,
            -A * p1 - (M1 - N1) * drift - M1 * diff,
            -A * p2 - (M2 - N2) * drift - M2 * diff,
        ]

    yT = [spec.G1, spec.G2, spec.h1, spec.h2, spec.lam1, spec.lam2, -spec.mu1, -spec.mu2]
    return _backward(rhs, yT, spec.grid.T, spec.grid.points)


def displayed_reduced_system(spec):
    """``(M1, Mtilde, J1)`` from the reduced equations written with ``B'Gam K^-1`` and ``B'N K^-1``.

    Agrees with the unreduced system only when all block products commute.
    """
    l = spec.l
    T = spec.grid.T

    def rhs(s, y):
        M1, Mt, J1, g = y  # g = exp(int_s^T A)
        c = interp_coeffs(spec, s)
        M = np.diag(np.repeat([M1, M1 / Mt], l))
        N = np.diag(np.repeat([M1 / J1, spec.h2 / spec.h1 * M1 / J1], l))
        Gam = np.diag(np.repeat([spec.lam1 * g, spec.lam2 * g], l))
        D, B, C = c["D"], c["B"], c["C"]
        Ki = np.linalg.inv(c["R"] + M @ D.T @ D)
        BDC = B + D.T @ C
        CD = C @ D
        dM1 = (-(2 * c["A"] + C @ C + B @ Gam @ Ki @ BDC) * M1 - c["Q1"]
               + BDC @ Ki @ M @ BDC * M1 - B @ N @ Ki @ BDC * M1)
        dMt = -(c["Q1"] / M1 - c["Q2"] / M1 * Mt) * Mt
        diag = np.diag(np.repeat([1.0, spec.h2 / spec.h1 * Mt], l))
        dJ1 = (-(C @ C - CD @ Ki @ M @ BDC + B @ Gam @ Ki @ D.T @ C + c["Q1"] / M1) * J1
               - CD @ Ki @ M @ diag @ B)
        return [dM1, dMt, dJ1, -c["A"] * g]

    Y = _backward(rhs, [spec.G1, spec.G1 / spec.G2, spec.G1 / spec.h1, 1.0], T, spec.grid.points)
    return Y[:, :3]


def p_ode(spec):
    """``(P1, P2)`` from ``P' = -(2A+|C|^2) P - Q_i``, ``P(T) = G_i``."""
    def rhs(s, y):
        c = interp_coeffs(spec, s)
        a = 2 * c["A"] + c["C"] @ c["C"]
        return [-a * y[0] - c["Q1"], -a * y[1] - c["Q2"]]

    return _backward(rhs, [spec.G1, spec.G2], spec.grid.T, spec.grid.points)


def gamma_ode(spec, lam):
    return _backward(lambda s, y: [-interp_coeffs(spec, s)["A"] * y[0]], [lam], spec.grid.T,
                     spec.grid.points)[:, 0]


# ---------------------------------------------------------------------------
# exact moments of the Euler-Maruyama scheme


def em_moments(a, f, c, g, y0, dt):
    """Mean and second moment of a vector affine Euler scheme.

    ``Y_{k+1} = Y_k + (a_k Y_k + f_k) dt + sum_j (c_kj Y_k + g_kj) dW_kj`` with
    ``a: (n, m, m)``, ``f: (n, m)``, ``c: (n, d, m, m)``, ``g: (n, d, m)``.
    Returns ``mu: (n+1, m)`` and ``S: (n+1, m, m)`` with ``S = E[Y Y']``.
    """
    n, m = f.shape
    mu = np.empty((n + 1, m))
    S = np.empty((n + 1, m, m))
    mu[0] = y0
    S[0] = np.outer(y0, y0)
    eye = np.eye(m)
    for k in range(n):
        F = eye + dt * a[k]
        fk = dt * f[k]
        mk, Sk = mu[k], S[k]
        mu[k + 1] = F @ mk + fk
        Fm = F @ mk
        Snew = F @ Sk @ F.T + np.outer(Fm, fk) + np.outer(fk, Fm) + np.outer(fk, fk)
        for j in range(c.shape[1]):
            cj, gj = c[k, j], g[k, j]
            cm = cj @ mk
            Snew += dt * (cj @ Sk @ cj.T + np.outer(cm, gj) + np.outer(gj, cm) + np.outer(gj, gj))
        S[k + 1] = Snew
    return mu, S


def closed_loop_coeffs(spec, strat):
    """Left-point closed-loop EM coefficients ``(a, f, c, g)`` for the scalar state."""
    B, D = spec.B, spec.D
    a = spec.A + np.einsum("ki,ki->k", B, strat.alpha)
    f = np.einsum("ki,ki->k", B, strat.beta) + spec.b
    c = spec.C + np.einsum("kji,ki->kj", D, strat.alpha)
    g = spec.sigma + np.einsum("kji,ki->kj", D, strat.beta)
    return a[:-1], f[:-1], c[:-1], g[:-1]


def euler_cost(spec, strat, player):
    """Exact expected cost of the Euler scheme from ``x0`` (trapezoid state cost, left-point controls)."""
    a, f, c, g = closed_loop_coeffs(spec, strat)
    mu, S = em_moments(a[:, None, None], f[:, None], c[:, :, None, None], g[:, :, None],
                       np.array([spec.x0]), spec.grid.dt)
    m, s2 = mu[:, 0], S[:, 0, 0]
    return _cost_from_moments(spec, strat, player, m, s2)


def _cost_from_moments(spec, strat, player, m, s2):
    dt = spec.grid.dt
    l = spec.l
    sl = slice((player - 1) * l, player * l)
    Q = spec.Q1 if player == 1 else spec.Q2
    R = (spec.R1 if player == 1 else spec.R2)[:-1]
    al, be = strat.alpha[:-1, sl], strat.beta[:-1, sl]
    qx = Q * s2
    state = dt * (0.5 * (qx[0] + qx[-1]) + qx[1:-1].sum())
    # E[u'Ru] with u = al X + be
    ctrl = dt * np.sum(np.einsum("ka,kab,kb->k", al, R, al) * s2[:-1]
                       + 2 * np.einsum("ka,kab,kb->k", al, R, be) * m[:-1]
                       + np.einsum("ka,kab,kb->k", be, R, be))
    G = spec.G1 if player == 1 else spec.G2
    h = spec.h1 if player == 1 else spec.h2
    lam = spec.lam1 if player == 1 else spec.lam2
    mu_ = spec.mu1 if player == 1 else spec.mu2
    return 0.5 * (state + ctrl) + 0.5 * G * s2[-1] - 0.5 * h * m[-1] ** 2 - (lam * spec.x0 + mu_) * m[-1]


def euler_open_loop_gap(spec, strat, t_index, n_window, v, player):
    """Exact Euler-level expectation of ``J_i(spiked) - J_i(base)`` for an open-loop spike at ``t = 0``.

    The pair ``(X, delta)`` is a 2-dimensional affine EM scheme; its first and
    second moments give the cost change in closed form.
    """
    assert t_index == 0
    a, f, c, g = closed_loop_coeffs(spec, strat)
    n, d, l = len(a), spec.d, spec.l
    sl = slice((player - 1) * l, player * l)
    v = np.asarray(v, dtype=float)
    on = np.zeros(n)
    on[:n_window] = 1.0
    fv = (spec.B[:-1, sl] @ v) * on
    gv = (spec.D[:-1, :, sl] @ v) * on[:, None]
    A2 = np.zeros((n, 2, 2))
    A2[:, 0, 0] = a
    A2[:, 1, 1] = spec.A[:-1]
    F2 = np.column_stack([f, fv])
    C2 = np.zeros((n, d, 2, 2))
    C2[:, :, 0, 0] = c
    C2[:, :, 1, 1] = spec.C[:-1]
    G2 = np.stack([g, gv], axis=2)
    mu, S = em_moments(A2, F2, C2, G2, np.array([spec.x0, 0.0]), spec.grid.dt)
    mX, md = mu[:, 0], mu[:, 1]
    Xd, dd = S[:, 0, 1], S[:, 1, 1]
    dt = spec.grid.dt
    Q = spec.Q1 if player == 1 else spec.Q2
    R = (spec.R1 if player == 1 else spec.R2)[:-1]
    q = Q * (2 * Xd + dd)
    state = dt * (0.5 * (q[0] + q[-1]) + q[1:-1].sum())
    al, be = strat.alpha[:-1, sl], strat.beta[:-1, sl]
    # E[du'R(2u + du)] with du = v on the window, u = al X + be
    Ru = 2 * (np.einsum("a,kab,kb->k", v, R, al) * mX[:-1] + np.einsum("a,kab,kb->k", v, R, be))
    ctrl = dt * np.sum(on * (Ru + np.einsum("a,kab,b->k", v, R, v)))
    G = spec.G1 if player == 1 else spec.G2
    h = spec.h1 if player == 1 else spec.h2
    lam = spec.lam1 if player == 1 else spec.lam2
    mu_ = spec.mu1 if player == 1 else spec.mu2
    term = 0.5 * G * (2 * Xd[-1] + dd[-1])
    mT, dT = mX[-1], md[-1]
    return (0.5 * (state + ctrl) + term - 0.5 * h * ((mT + dT) ** 2 - mT ** 2)
            - (lam * spec.x0 + mu_) * dT)
