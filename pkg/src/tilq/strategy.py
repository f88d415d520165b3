"""Block assembly, linear-feedback synthesis and the diagonal equilibrium identity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors
from .model import ProblemSpec, TimeGrid
from .riccati import COND_MAX, RiccatiSolution


@dataclass(frozen=True)
class BlockSet:
    """Stacked two-player quantities at one time ``s`` (all 2l-dimensional blocks)."""

    s: float
    M: np.ndarray
    N: np.ndarray
    Gam: np.ndarray
    Phi: np.ndarray
    R: np.ndarray
    B: np.ndarray
    D: np.ndarray
    C: np.ndarray
    sigma: np.ndarray
    b: float
    A: float

    @property
    def K(self) -> np.ndarray:
        return self.R + self.M @ self.D.T @ self.D


def _diag_pair(l, x1, x2):
    return np.diag(np.repeat([x1, x2], l).astype(float))


def assemble(spec: ProblemSpec, sol: RiccatiSolution, s: float) -> BlockSet:
    v = sol.at(s)
    c = spec.sample(s).at(0)
    l = spec.l
    return BlockSet(
        s=float(s),
        M=_diag_pair(l, v["M1"], v["M2"]),
        N=_diag_pair(l, v["N1"], v["N2"]),
        Gam=_diag_pair(l, v["Gam1"], v["Gam2"]),
        Phi=_diag_pair(l, v["Phi1"], v["Phi2"]),
        R=c.R, B=c.B, D=c.D, C=c.C, sigma=c.sigma, b=float(c.b), A=float(c.A),
    )


@dataclass(frozen=True)
class FeedbackStrategy:
    """``u*(s) = alpha(s) X_s + beta(s)`` sampled on the grid (players stacked)."""

    grid: TimeGrid
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def l(self) -> int:
        return self.alpha.shape[1] // 2

    def player(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        sl = slice(0, self.l) if i == 1 else slice(self.l, 2 * self.l)
        return self.alpha[:, sl], self.beta[:, sl]

    def at(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        pts = self.grid.points
        a = np.array([np.interp(s, pts, self.alpha[:, j]) for j in range(self.alpha.shape[1])])
        b = np.array([np.interp(s, pts, self.beta[:, j]) for j in range(self.beta.shape[1])])
        return a, b

    def half(self) -> tuple[np.ndarray, np.ndarray]:
        """Values on the half grid (linear interpolation at interval midpoints)."""
        out = []
        for arr in (self.alpha, self.beta):
            h = np.empty((2 * len(arr) - 1, arr.shape[1]))
            h[0::2] = arr
            h[1::2] = 0.5 * (arr[:-1] + arr[1:])
            out.append(h)
        return out[0], out[1]

    def table(self) -> np.ndarray:
        return np.column_stack([self.grid.points, self.alpha, self.beta])

    def columns(self) -> list[str]:
        m = self.alpha.shape[1]
        return ["s"] + [f"alpha_{j + 1}" for j in range(m)] + [f"beta_{j + 1}" for j in range(m)]

    @classmethod
    def from_table(cls, grid: TimeGrid, table) -> "FeedbackStrategy":
        table = np.asarray(table, dtype=float)
        m = (table.shape[1] - 1) // 2
        if not np.allclose(table[:, 0], grid.points, rtol=0, atol=1e-12 * max(1.0, grid.T)):
            raise ValueError("strategy table is not sampled on the problem grid")
        return cls(grid, table[:, 1:1 + m].copy(), table[:, 1 + m:1 + 2 * m].copy())

    def perturbed(self, alpha_scale=1.0, beta_scale=1.0, beta_offset=0.0) -> "FeedbackStrategy":
        return FeedbackStrategy(self.grid, alpha_scale * self.alpha,
                                beta_scale * self.beta + beta_offset)


def _node_blocks(spec: ProblemSpec, sol: RiccatiSolution):
    l = spec.l
    rep = lambda x1, x2: np.repeat(np.column_stack([x1, x2]), l, axis=1)  # noqa: E731
    mvec = rep(sol.M1, sol.M2)
    nvec = rep(sol.N1, sol.N2)
    gvec = rep(sol.Gam1, sol.Gam2)
    pvec = rep(sol.Phi1, sol.Phi2)
    D = spec.D
    DtD = np.einsum("kji,kjm->kim", D, D)
    K = spec.R + mvec[:, :, None] * DtD
    DC = np.einsum("kji,kj->ki", D, spec.C)
    Dsig = np.einsum("kji,kj->ki", D, spec.sigma)
    return mvec, nvec, gvec, pvec, K, DC, Dsig


def feedback(spec: ProblemSpec, sol: RiccatiSolution) -> FeedbackStrategy:
    """Equilibrium gains ``alpha = -K^{-1}[(M-N-Gam)B + M D'C]``, ``beta = -K^{-1}(Phi B + M D' sigma)``.

    ``K = R + M D'D`` is factorised by LU at every grid point; never inverted.
    """
    mvec, nvec, gvec, pvec, K, DC, Dsig = _node_blocks(spec, sol)
    cond = np.linalg.cond(K)
    bad = np.flatnonzero(~(cond <= COND_MAX))
    if bad.size:
        k = int(bad[0])
        raise errors.SingularLinearSystem("R + M D'D is numerically singular",
                                          s=float(k * spec.grid.dt), matrix=K[k])
    B = spec.B
    rhs = np.stack([(mvec - nvec - gvec) * B + mvec * DC, pvec * B + mvec * Dsig], axis=2)
    sol_ab = np.linalg.solve(K, rhs)
    return FeedbackStrategy(spec.grid, -sol_ab[:, :, 0], -sol_ab[:, :, 1])


def lambda_diag(spec: ProblemSpec, sol: RiccatiSolution, strat: FeedbackStrategy,
                t: float, x_t: float) -> np.ndarray:
    """Stacked ``Lambda(t;t)`` for the state value ``x_t`` (zero at an equilibrium)."""
    blk = assemble(spec, sol, t)
    alpha, beta = strat.at(t)
    u = alpha * x_t + beta
    DC = blk.D.T @ blk.C
    state_coef = blk.M @ (blk.B + DC) - blk.N @ blk.B - blk.Gam @ blk.B
    return blk.K @ u + state_coef * x_t + (blk.Phi @ blk.B + blk.M @ blk.D.T @ blk.sigma)


def lambda_diag_grid(spec: ProblemSpec, sol: RiccatiSolution, strat: FeedbackStrategy,
                     x_values) -> np.ndarray:
    """``Lambda(s;s)`` at every grid point and each state in ``x_values``: shape (n+1, len(x), 2l)."""
    mvec, nvec, gvec, pvec, K, DC, Dsig = _node_blocks(spec, sol)
    B = spec.B
    x = np.asarray(x_values, dtype=float)
    u = strat.alpha[:, None, :] * x[None, :, None] + strat.beta[:, None, :]
    Ku = np.einsum("kij,kxj->kxi", K, u)
    state_coef = mvec * (B + DC) - nvec * B - gvec * B
    const = pvec * B + mvec * Dsig
    return Ku + state_coef[:, None, :] * x[None, :, None] + const[:, None, :]
