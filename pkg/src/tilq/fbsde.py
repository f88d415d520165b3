"""Adjoint processes from the affine ansatz and a Monte-Carlo check of their BSDE."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import errors, mc
from .adjoint import PolicyAdjoint, expected_lambda, policy_adjoint  # noqa: F401  (re-export)
from .model import ProblemSpec
from .riccati import RiccatiSolution


@dataclass(frozen=True)
class AdjointEval:
    t: float
    s: float
    p1: float
    p2: float
    k1: np.ndarray
    k2: np.ndarray

    def __post_init__(self):
        if self.s < self.t:
            raise ValueError("adjoint evaluated at s < t")


def _interp(sol: RiccatiSolution, s, name):
    return np.interp(s, sol.grid.points, getattr(sol, name))


def ansatz_p(sol: RiccatiSolution, t, s, x_s, m_s, x_t):
    """``p_i(s;t) = M_i X_s - N_i E_t[X_s] - Gam_i X_t + Phi_i`` (broadcasts over arrays)."""
    out = []
    for i in (1, 2):
        M, N, G, P = (_interp(sol, s, f"{k}{i}") for k in ("M", "N", "Gam", "Phi"))
        out.append(M * x_s - N * m_s - G * x_t + P)
    return out[0], out[1]


def ansatz_k(spec: ProblemSpec, sol: RiccatiSolution, strat, s, x_s):
    """``k_i(s) = M_i(s) [C X_s + D u*(s, X_s) + sigma]``; a d-vector per state, free of ``t``."""
    c = spec.sample(s).at(0)
    alpha, beta = strat.at(s)
    x = np.asarray(x_s, dtype=float)
    u = alpha * x[..., None] + beta
    vol = c.C * x[..., None] + u @ c.D.T + c.sigma
    return _interp(sol, s, "M1") * vol, _interp(sol, s, "M2") * vol


def adjoint_eval(spec, sol, strat, t, s, x_s, m_s, x_t) -> AdjointEval:
    p1, p2 = ansatz_p(sol, t, s, x_s, m_s, x_t)
    k1, k2 = ansatz_k(spec, sol, strat, s, x_s)
    return AdjointEval(float(t), float(s), float(p1), float(p2), k1, k2)


def lambda_path(spec: ProblemSpec, sol: RiccatiSolution, strat, t, s, x_s, m_s, x_t) -> np.ndarray:
    """Stacked ``Lambda_i(s;t) = R_i u_i + B_i p_i + D_i' k_i`` with ``p, k`` from the ansatz."""
    c = spec.sample(s).at(0)
    l = spec.l
    alpha, beta = strat.at(s)
    u = alpha * float(x_s) + beta
    p1, p2 = ansatz_p(sol, t, s, x_s, m_s, x_t)
    k1, k2 = ansatz_k(spec, sol, strat, s, x_s)
    out = np.empty(2 * l)
    for i, (p, k) in enumerate(((p1, k1), (p2, k2))):
        sl = slice(i * l, (i + 1) * l)
        out[sl] = c.R[sl, sl] @ u[sl] + c.B[sl] * p + c.D[:, sl].T @ k
    return out


@dataclass(frozen=True)
class BSDEReport:
    t: float
    left: np.ndarray
    right: np.ndarray
    std_err: np.ndarray
    n_paths: int
    tolerance: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return np.abs(self.left - self.right)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.residual <= self.tolerance))


def bsde_residual(spec: ProblemSpec, sol: RiccatiSolution, strat, t: float = 0.0,
                  n_paths: int = 100_000, base_seed: int = 42,
                  control_variate: bool = True) -> BSDEReport:
    """Integral-form check ``p_i(t;t) = E_t[xi_i + int_t^T (A p_i + C'k_i + Q_i X) ds]``.

    ``xi_i = G_i X_T - h_i E_t[X_T] - lam_i X_t - mu_i`` is the terminal
    condition of the problem itself, not the ansatz at ``T``.  For ``t > 0``
    the identity is averaged over ``X_t``: ``E_t[X_s]`` is affine in ``X_t``,
    so each path carries its own conditional mean and one level of sampling
    suffices.

    With ``control_variate`` the Ito sum ``sum_k k_i(s_k).dW_k`` of the ansatz
    ``k`` is subtracted path by path.  Its expectation is exactly zero for any
    adapted ``k``, so the estimate stays unbiased while the martingale noise
    cancels.  Tolerance per player is ``max(4 std_err, 5 ds)``.
    """
    grid = spec.grid
    kt = grid.index_of(t)
    dt = grid.dt
    # E_t[X_s] = g(s) X_t + c(s)
    c0 = mc.expected_state(spec, strat, t, 0.0)
    g1 = mc.expected_state(spec, strat, t, 1.0) - c0
    A = spec.A[kt:]
    Cc = spec.C[kt:]
    vol_x = Cc + np.einsum("kji,ki->kj", spec.D[kt:], strat.alpha[kt:])
    vol_c = spec.sigma[kt:] + np.einsum("kji,ki->kj", spec.D[kt:], strat.beta[kt:])
    # C'k_i = M_i [ C'(C + D alpha) X + C'(D beta + sigma) ]
    ck_x = np.einsum("kj,kj->k", Cc, vol_x)
    ck_c = np.einsum("kj,kj->k", Cc, vol_c)
    coeffs = mc._closed_loop(spec, strat)
    players = []
    for i in (1, 2):
        pl = spec.player(i)
        arrs = tuple(getattr(sol, f"{k}{i}")[kt:] for k in ("M", "N", "Gam", "Phi"))
        players.append((pl, arrs, getattr(spec, f"Q{i}")[kt:]))

    def run(lo, hi):
        dW, Xfull = mc._simulate_chunk(spec, coeffs, base_seed, lo, hi, 0, spec.x0)
        X = Xfull[:, kt:]
        dW = dW[:, kt:]
        x_t = X[:, 0]
        m = g1[None, :] * x_t[:, None] + c0[None, :]
        # k(s_k).dW_k / M(s_k), shared by both players
        kdw = np.einsum("pkj,pkj->pk", X[:, :-1, None] * vol_x[None, :-1] + vol_c[None, :-1], dW)
        out = []
        for pl, (M, N, G, P), Q in players:
            p = M * X - N * m - G * x_t[:, None] + P
            drv = A * p + M * (ck_x * X + ck_c) + Q * X
            integral = dt * (0.5 * (drv[:, 0] + drv[:, -1]) + drv[:, 1:-1].sum(axis=1))
            xi = pl["G"] * X[:, -1] - pl["h"] * m[:, -1] - pl["lam"] * x_t - pl["mu"]
            right = xi + integral
            if control_variate:
                right = right - kdw @ M[:-1]
            left = (M[0] - N[0] - G[0]) * x_t + P[0]
            out.append(np.stack([left, right]))
        return np.stack(out)

    vals = np.concatenate(mc._map_chunks(run, n_paths), axis=2)
    ok = np.all(np.isfinite(vals), axis=(0, 1))
    if (~ok).sum() > mc.MAX_INVALID_FRACTION * n_paths:
        raise errors.InvalidPath(f"{int((~ok).sum())} of {n_paths} paths became non-finite")
    vals = vals[:, :, ok]
    left = vals[:, 0].mean(axis=1)
    right = vals[:, 1].mean(axis=1)
    se = (vals[:, 0] - vals[:, 1]).std(axis=1, ddof=1) / math.sqrt(vals.shape[2])
    tol = np.maximum(4.0 * se, 5.0 * dt)
    return BSDEReport(float(t), left, right, se, int(ok.sum()), tol)
