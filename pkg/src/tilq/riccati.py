"""Backward Riccati-type ODE systems for the linear-feedback equilibrium.

The coupled system is integrated in the reduced unknowns ``(M1, Mtilde, J1)``
with ``Mtilde = M1/M2`` and ``J1 = M1/N1``.  The right-hand sides are evaluated
through the unreduced block quantities, which keeps the ordering of the
non-commuting products ``K^{-1} N`` and ``K^{-1} Gamma`` intact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import errors
from ._ode import hermite_half, rk4_backward
from .model import ProblemSpec, TimeGrid, check_conditions, exp_int_A, mtilde_bounds, validate

COND_MAX = 1e12
DIV_TOL = 1e-14
BOUND_RTOL = 1e-10

# 8-point Gauss-Legendre rule on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class CoreSolution:
    M1: np.ndarray
    Mtilde: np.ndarray
    J1: np.ndarray
    derivatives: np.ndarray
    half: np.ndarray  # (2n+1, 3) dense output of (M1, Mtilde, J1)


@dataclass(frozen=True)
class RiccatiSolution:
    grid: TimeGrid
    M1: np.ndarray
    M2: np.ndarray
    N1: np.ndarray
    N2: np.ndarray
    Gam1: np.ndarray
    Gam2: np.ndarray
    Phi1: np.ndarray
    Phi2: np.ndarray
    Mtilde: np.ndarray
    J1: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    bounds: tuple[float, float] = (math.nan, math.nan)
    conditions_passed: bool = False
    extras: dict = field(default_factory=dict, repr=False, compare=False)

    COLUMNS = ("M1", "M2", "N1", "N2", "Gam1", "Gam2", "Phi1", "Phi2", "Mtilde", "J1", "P1", "P2")

    def table(self) -> np.ndarray:
        """Grid-point table with columns ``s`` followed by ``COLUMNS``."""
        return np.column_stack([self.grid.points] + [getattr(self, c) for c in self.COLUMNS])

    def at(self, s: float) -> dict[str, float]:
        """Linear interpolation of every trajectory at time ``s``."""
        pts = self.grid.points
        return {c: float(np.interp(s, pts, getattr(self, c))) for c in self.COLUMNS}

    def with_values(self, **changes) -> "RiccatiSolution":
        import dataclasses
        return dataclasses.replace(self, **changes)


class _Blocks:
    """Precomputed half-grid coefficient products shared by the right-hand sides."""

    def __init__(self, spec: ProblemSpec):
        hg = spec.half_grid()
        self.spec = spec
        self.l = spec.l
        self.times = hg.times
        self.A = hg.A
        self.B = hg.B
        self.b = hg.b
        self.Q1 = hg.Q1
        self.Q2 = hg.Q2
        self.R = hg.R
        self.DtD = np.einsum("kji,kjm->kim", hg.D, hg.D)
        self.DC = np.einsum("kji,kj->ki", hg.D, hg.C)
        self.Dsig = np.einsum("kji,kj->ki", hg.D, hg.sigma)
        self.C2 = np.einsum("kj,kj->k", hg.C, hg.C)
        self.Csig = np.einsum("kj,kj->k", hg.C, hg.sigma)
        self.eA = exp_int_A(spec)
        self.lam = (spec.lam1, spec.lam2)

    def pair(self, x1, x2):
        return np.repeat(np.array([x1, x2], dtype=float), self.l)

    def gamma(self, j):
        return self.pair(self.lam[0] * self.eA[j], self.lam[1] * self.eA[j])

    def K(self, j, mvec):
        return self.R[j] + mvec[:, None] * self.DtD[j]

    def solve(self, j, K, rhs):
        if np.linalg.cond(K) > COND_MAX:
            raise errors.SingularLinearSystem("R + M D'D is numerically singular",
                                              s=float(self.times[j]), matrix=K)
        return np.linalg.solve(K, rhs)


def _reduction_ratio(spec: ProblemSpec) -> float | None:
    """``h2/h1``, or ``None`` when both are zero (then ``N`` vanishes identically)."""
    if spec.G2 == 0.0:
        raise errors.UnsupportedSpec("G2 = 0 leaves Mtilde(T) = G1/G2 undefined")
    if spec.h1 == 0.0:
        if spec.h2 != 0.0:
            raise errors.UnsupportedSpec("h1 = 0 with h2 != 0 breaks N2 = (h2/h1) N1")
        return None
    return spec.h2 / spec.h1


def solve_gamma(spec: ProblemSpec) -> tuple[np.ndarray, np.ndarray]:
    """``Gamma_i(s) = lam_i * exp(int_s^T A)`` at the grid points."""
    e = exp_int_A(spec)[0::2]
    return spec.lam1 * e, spec.lam2 * e


def _rate_P(spec: ProblemSpec):
    """Quadratic-in-time exponent rate ``2A + |C|^2`` at nodes and midpoints."""
    hg = spec.half_grid()
    a = 2.0 * hg.A + np.einsum("kj,kj->k", hg.C, hg.C)
    return a[0::2], a[1::2]


def solve_P(spec: ProblemSpec) -> tuple[np.ndarray, np.ndarray]:
    """Second-order adjoint ``P_i(s) = G_i e^{int_s^T a} + int_s^T e^{int_s^v a} Q_i(v) dv``.

    ``a = 2A + |C|^2``.  Interval exponents are integrated exactly (Simpson on
    a quadratic), the Q-integral with 8-point Gauss-Legendre per interval.
    """
    n, dt = spec.grid.n_steps, spec.grid.dt
    a_node, a_mid = _rate_P(spec)
    # a(s_k + x dt) = c0 + c1 x + c2 x^2 on each interval
    c0 = a_node[:-1]
    c1 = 4.0 * a_mid - 3.0 * a_node[:-1] - a_node[1:]
    c2 = 2.0 * (a_node[:-1] + a_node[1:]) - 4.0 * a_mid
    x = _GL_X
    expo = dt * (np.outer(c0, x) + np.outer(c1, x ** 2 / 2) + np.outer(c2, x ** 3 / 3))
    step = np.exp(dt * (c0 + c1 / 2 + c2 / 3))
    out = []
    for Q, G in ((spec.Q1, spec.G1), (spec.Q2, spec.G2)):
        Qx = np.outer(Q[:-1], 1.0 - x) + np.outer(Q[1:], x)
        local = dt * np.sum(_GL_W * np.exp(expo) * Qx, axis=1)
        P = np.empty(n + 1)
        P[n] = G
        for k in range(n - 1, -1, -1):
            P[k] = step[k] * P[k + 1] + local[k]
        out.append(P)
    return out[0], out[1]


def solve_core(spec: ProblemSpec) -> CoreSolution:
    """Backward RK4 for ``(M1, Mtilde, J1)`` from ``(G1, G1/G2, G1/h1)`` at ``s = T``.

    When ``h1 = h2 = 0`` the N-blocks vanish identically; ``J1`` is then ``+inf``
    and only ``(M1, Mtilde)`` are integrated.
    """
    ratio = _reduction_ratio(spec)
    blk = _Blocks(spec)
    n, dt = spec.grid.n_steps, spec.grid.dt
    with_j = ratio is not None

    def rhs(j, y):
        M1, Mt = y[0], y[1]
        if M1 <= 0.0 or Mt <= 0.0:
            raise errors.NonPositive("M1 or Mtilde left the positive half-line", s=float(blk.times[j]))
        mvec = blk.pair(M1, M1 / Mt)
        if with_j:
            J1 = y[2]
            if abs(J1) < DIV_TOL:
                raise errors.DivisionByZero("J1 vanished", s=float(blk.times[j]))
            nvec = blk.pair(M1 / J1, ratio * M1 / J1)
        else:
            nvec = np.zeros(2 * blk.l)
        gvec = blk.gamma(j)
        B, DC = blk.B[j], blk.DC[j]
        K = blk.K(j, mvec)
        v = blk.solve(j, K, (mvec - nvec - gvec) * B + mvec * DC)
        dM1 = -(2.0 * blk.A[j] + blk.C2[j]) * M1 - blk.Q1[j] + M1 * np.dot(B + DC, v)
        dMt = -(blk.Q1[j] - blk.Q2[j] * Mt) * Mt / M1
        if not with_j:
            return np.array([dM1, dMt])
        dJ1 = -(blk.C2[j] + blk.Q1[j] / M1 - np.dot(DC, v)) * y[2]
        return np.array([dM1, dMt, dJ1])

    def check(k, y):
        if not (y[0] > 0.0 and y[1] > 0.0):
            raise errors.NonPositive("M1 or Mtilde is not positive", s=float(k * dt))
        if not np.all(np.isfinite(y)):
            raise errors.SolverError("non-finite state", s=float(k * dt))

    yT = [spec.G1, spec.G1 / spec.G2] + ([spec.G1 / spec.h1] if with_j else [])
    Y, F = rk4_backward(rhs, yT, n, dt, check=check)
    if not with_j:
        Y = np.column_stack([Y, np.full(n + 1, np.inf)])
        F = np.column_stack([F, np.zeros(n + 1)])
    half = hermite_half(Y, F, dt)
    if not with_j:
        half[:, 2] = np.inf
    return CoreSolution(Y[:, 0], Y[:, 1], Y[:, 2], F, half)


def recover(spec: ProblemSpec, M1, Mtilde, J1):
    """``M2 = M1/Mtilde``, ``N1 = M1/J1``, ``N2 = (h2/h1) N1``, pointwise."""
    M1, Mtilde, J1 = (np.asarray(x, dtype=float) for x in (M1, Mtilde, J1))
    for name, den in (("Mtilde", Mtilde), ("J1", J1)):
        bad = np.flatnonzero(np.abs(den) < DIV_TOL)
        if bad.size:
            raise errors.DivisionByZero(f"{name} vanishes", s=float(bad[0] * spec.grid.dt))
    M2 = M1 / Mtilde
    N1 = M1 / J1
    if spec.h1 == 0.0:
        if spec.h2 != 0.0:
            raise errors.DivisionByZero("h1 = 0")
        N2 = np.zeros_like(N1)
    else:
        N2 = (spec.h2 / spec.h1) * N1
    return M2, N1, N2


def _half_blocks(spec: ProblemSpec, core_half: np.ndarray):
    M1 = core_half[:, 0]
    M2 = M1 / core_half[:, 1]
    N1 = M1 / core_half[:, 2]
    N2 = np.zeros_like(N1) if spec.h1 == 0.0 else (spec.h2 / spec.h1) * N1
    return M1, M2, N1, N2


def solve_phi(spec: ProblemSpec, core: CoreSolution) -> tuple[np.ndarray, np.ndarray]:
    """Backward RK4 for the coupled pair ``(Phi1, Phi2)`` with ``Phi_i(T) = -mu_i``.

    The driver is obtained by matching constant drift terms of the affine
    adjoint representation, with the intercept ``beta`` of the feedback
    substituted (it depends on both ``Phi1`` and ``Phi2``).
    """
    blk = _Blocks(spec)
    M1h, M2h, N1h, N2h = _half_blocks(spec, core.half)
    n, dt = spec.grid.n_steps, spec.grid.dt

    def rhs(j, phi):
        mvec = blk.pair(M1h[j], M2h[j])
        K = blk.K(j, mvec)
        beta = -blk.solve(j, K, blk.pair(phi[0], phi[1]) * blk.B[j] + mvec * blk.Dsig[j])
        drift = np.dot(blk.B[j], beta) + blk.b[j]
        diff = np.dot(blk.DC[j], beta) + blk.Csig[j]
        A = blk.A[j]
        return np.array([
            -A * phi[0] - (M1h[j] - N1h[j]) * drift - M1h[j] * diff,
            -A * phi[1] - (M2h[j] - N2h[j]) * drift - M2h[j] * diff,
        ])

    Y, _ = rk4_backward(rhs, [-spec.mu1, -spec.mu2], n, dt)
    return Y[:, 0], Y[:, 1]


def solve_all(spec: ProblemSpec, check_bounds: bool = True) -> RiccatiSolution:
    """Full pipeline: Gamma, reduced core, recovery, Phi, P and the M-tilde bracket check."""
    violations = validate(spec)
    if violations:
        raise errors.ValidationError(violations)
    report = check_conditions(spec)
    gam1, gam2 = solve_gamma(spec)
    core = solve_core(spec)
    M2, N1, N2 = recover(spec, core.M1, core.Mtilde, core.J1)
    phi1, phi2 = solve_phi(spec, core)
    P1, P2 = solve_P(spec)
    L1, L2 = mtilde_bounds(spec)
    sol = RiccatiSolution(
        grid=spec.grid, M1=core.M1, M2=M2, N1=N1, N2=N2, Gam1=gam1, Gam2=gam2,
        Phi1=phi1, Phi2=phi2, Mtilde=core.Mtilde, J1=core.J1, P1=P1, P2=P2,
        bounds=(L1, L2), conditions_passed=report.overall,
        extras={"core": core, "report": report},
    )
    _assert_terminal(spec, sol)
    if check_bounds and report.overall:
        lo = L1 - BOUND_RTOL * abs(L1)
        hi = L2 + BOUND_RTOL * abs(L2)
        bad = np.flatnonzero((sol.Mtilde < lo) | (sol.Mtilde > hi))
        if bad.size:
            k = int(bad[0])
            raise errors.BoundViolation(
                f"Mtilde={sol.Mtilde[k]!r} outside [{L1!r}, {L2!r}]", s=float(k * spec.grid.dt))
    return sol


def _assert_terminal(spec: ProblemSpec, sol: RiccatiSolution):
    want = {
        "M1": spec.G1, "M2": spec.G2, "Gam1": spec.lam1, "Gam2": spec.lam2,
        "Phi1": -spec.mu1, "Phi2": -spec.mu2, "Mtilde": spec.G1 / spec.G2,
        "P1": spec.G1, "P2": spec.G2,
    }
    if spec.h1 != 0.0:
        want.update({"N1": spec.h1, "N2": spec.h2, "J1": spec.G1 / spec.h1})
    for name, value in want.items():
        got = getattr(sol, name)[-1]
        if not math.isclose(got, value, rel_tol=1e-15, abs_tol=0.0):
            raise errors.SolverError(f"terminal value of {name} is {got!r}, expected {value!r}")
