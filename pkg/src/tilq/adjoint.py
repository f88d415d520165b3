"""First-order adjoint coefficients for an arbitrary linear feedback profile.

For a profile ``u = alpha X + beta`` (both players stacked) the adjoint of
player i is affine, ``p_i(s;t) = M_i X_s - N_i E_t[X_s] - Gam_i X_t + Phi_i``,
with coefficients solving the *linear* backward system

    M_i' = -(2A + |C|^2) M_i - Q_i - M_i (B + D'C).alpha,      M_i(T) = G_i
    N_i' = -2A N_i - N_i B.alpha,                             N_i(T) = h_i
    Gam_i' = -A Gam_i,                                        Gam_i(T) = lam_i
    Phi_i' = -A Phi_i - (M_i - N_i)(B.beta + b) - M_i C.(D beta + sigma),
                                                              Phi_i(T) = -mu_i

For the equilibrium profile these coincide with the Riccati solution, which
gives an independent route to the same trajectories.  For any other profile
they price the first-order effect of a spike on player i's cost.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._ode import rk4_backward
from .model import ProblemSpec, exp_int_A


@dataclass(frozen=True)
class PolicyAdjoint:
    """Adjoint coefficients on the grid; arrays are indexed ``[k, i-1]``."""

    M: np.ndarray
    N: np.ndarray
    Gam: np.ndarray
    Phi: np.ndarray


def policy_adjoint(spec: ProblemSpec, strat) -> PolicyAdjoint:
    hg = spec.half_grid()
    a_h, b_h = strat.half()
    DC = np.einsum("kji,kj->ki", hg.D, hg.C)
    C2 = np.einsum("kj,kj->k", hg.C, hg.C)
    Bal = np.einsum("ki,ki->k", hg.B, a_h)
    BDCal = np.einsum("ki,ki->k", hg.B + DC, a_h)
    drift_c = np.einsum("ki,ki->k", hg.B, b_h) + hg.b
    diff_c = np.einsum("kj,kj->k", hg.C, np.einsum("kji,ki->kj", hg.D, b_h) + hg.sigma)
    A = hg.A
    Q = np.column_stack([hg.Q1, hg.Q2])

    def rhs(j, y):
        M, N, Phi = y[0:2], y[2:4], y[4:6]
        dM = -(2.0 * A[j] + C2[j]) * M - Q[j] - M * BDCal[j]
        dN = -2.0 * A[j] * N - N * Bal[j]
        dPhi = -A[j] * Phi - (M - N) * drift_c[j] - M * diff_c[j]
        return np.concatenate([dM, dN, dPhi])

    yT = [spec.G1, spec.G2, spec.h1, spec.h2, -spec.mu1, -spec.mu2]
    Y, _ = rk4_backward(rhs, yT, spec.grid.n_steps, spec.grid.dt)
    e = exp_int_A(spec)[0::2]
    Gam = np.column_stack([spec.lam1 * e, spec.lam2 * e])
    return PolicyAdjoint(M=Y[:, 0:2], N=Y[:, 2:4], Gam=Gam, Phi=Y[:, 4:6])


def expected_lambda(spec: ProblemSpec, strat, adj: PolicyAdjoint, player: int,
                    m, x_t: float) -> np.ndarray:
    """``E_t[Lambda_i(s;t)]`` at every grid point given ``m = E_t[X_s]`` on the grid.

    Returns an array of shape (n+1, l).  Uses linearity: the expectation of
    ``R u_i + B_i p_i + D_i' k_i`` replaces ``X_s`` by ``m_s``.
    """
    l = spec.l
    i = player - 1
    sl = slice(i * l, (i + 1) * l)
    m = np.asarray(m, dtype=float)
    u = strat.alpha * m[:, None] + strat.beta
    Bi = spec.B[:, sl]
    Di = spec.D[:, :, sl]
    Ri = spec.R1 if player == 1 else spec.R2
    M, N, Gam, Phi = adj.M[:, i], adj.N[:, i], adj.Gam[:, i], adj.Phi[:, i]
    p = (M - N) * m - Gam * x_t + Phi
    k = M[:, None] * (spec.C * m[:, None] + np.einsum("kji,ki->kj", spec.D, u) + spec.sigma)
    return (np.einsum("kab,kb->ka", Ri, u[:, sl]) + Bi * p[:, None]
            + np.einsum("kji,kj->ki", Di, k))
