"""Monte-Carlo simulation of the controlled state, cost estimation and spike checks.

Paths are processed in fixed-size chunks.  Every Brownian increment is a pure
function of ``(seed, path, step, component)``, and per-path results are
concatenated in path order before any reduction, so estimates do not depend on
how chunks are spread over worker threads (``TILQ_THREADS``).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, errors
from ._ode import rk4_forward
from .adjoint import PolicyAdjoint, expected_lambda, policy_adjoint
from .model import ProblemSpec
from .riccati import solve_P

CHUNK = 8192
MAX_INVALID_FRACTION = 1e-3
NOT_PSD_TOL = 1e-10
CONVENTIONS = ("open_loop", "feedback")


def n_workers() -> int:
    raw = os.environ.get("TILQ_THREADS", "").strip()
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def _map_chunks(fn, n_paths: int, chunk: int = CHUNK):
    bounds = [(lo, min(lo + chunk, n_paths)) for lo in range(0, n_paths, chunk)]
    workers = min(n_workers(), len(bounds))
    if workers <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


def derive_seed(base_seed: int, index: int) -> int:
    """Independent child seed for sub-batch ``index`` (nested evaluation)."""
    with np.errstate(over="ignore"):
        z = _kernels._mix_np(_kernels._mix_np(np.uint64(base_seed)) ^ np.uint64(index + 1))
        z = _kernels._mix_np(z ^ np.uint64(0xD1B54A32D192ED03))
    return int(z)


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class SpikeConfig:
    t: float
    eps: float
    v: np.ndarray
    player: int

    def __post_init__(self):
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))
        if self.player not in (1, 2):
            raise ValueError("player must be 1 or 2")
        if not np.all(np.isfinite(self.v)):
            raise ValueError("spike direction must be finite")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    def window(self, grid) -> tuple[int, int]:
        """Grid indices ``(k_start, k_end)`` with the spike active on steps ``k_start <= k < k_end``."""
        ks = grid.index_of(self.t)
        nw = grid.steps_in(self.eps)
        if nw < 1 or ks + nw > grid.n_steps:
            raise ValueError(f"spike window [{self.t}, {self.t + self.eps}) not inside [0, T)")
        return ks, ks + nw


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Simulated state paths on grid steps ``k0 .. n``.

    ``dW`` and ``u`` are regenerated on access (they are large); ``X`` is stored.
    For an open-loop spiked batch the controls are those of the reference
    paths ``u_ref`` plus the spike, not the feedback rule applied to ``X``.
    """

    spec: ProblemSpec
    strat: object
    X: np.ndarray
    base_seed: int
    k0: int = 0
    spike: SpikeConfig | None = None
    convention: str = "open_loop"
    X_ref: np.ndarray | None = field(default=None, repr=False)

    @property
    def grid(self):
        return self.spec.grid

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def invalid(self) -> np.ndarray:
        return ~np.all(np.isfinite(self.X), axis=1)

    @property
    def dW(self) -> np.ndarray:
        g = self.grid
        return _kernels.normal_increments(self.base_seed, np.arange(self.n_paths), self.k0,
                                          g.n_steps - self.k0, self.spec.d, g.dt)

    @property
    def u(self) -> np.ndarray:
        return _controls(self.spec, self.strat, self.X, self.k0, self.spike, self.convention,
                         self.X_ref)


# ---------------------------------------------------------------------------
# coefficients and per-chunk simulation


def _closed_loop(spec: ProblemSpec, strat):
    """Per-step EM coefficients of the closed-loop state, left-point in time."""
    B, D = spec.B, spec.D
    a = spec.A + np.einsum("ki,ki->k", B, strat.alpha)
    f = np.einsum("ki,ki->k", B, strat.beta) + spec.b
    c = spec.C + np.einsum("kji,ki->kj", D, strat.alpha)
    g = spec.sigma + np.einsum("kji,ki->kj", D, strat.beta)
    return a[:-1], f[:-1], c[:-1], g[:-1]


def _player_slice(spec, player):
    return slice((player - 1) * spec.l, player * spec.l)


def _spike_forcing(spec, cfg: SpikeConfig, ks: int, ke: int):
    """Drift and diffusion forcing ``B_i'v``, ``D_i v`` on steps ``ks .. n-1`` (zero off-window)."""
    sl = _player_slice(spec, cfg.player)
    if cfg.v.shape != (spec.l,):
        raise ValueError(f"spike direction must have length l={spec.l}")
    n = spec.grid.n_steps
    fv = np.zeros(n - ks)
    gv = np.zeros((n - ks, spec.d))
    fv[: ke - ks] = spec.B[ks:ke, sl] @ cfg.v
    gv[: ke - ks] = spec.D[ks:ke, :, sl] @ cfg.v
    return fv, gv


def _controls(spec, strat, X, k0, spike, convention, X_ref):
    n = spec.grid.n_steps
    Xs = X if (spike is None or convention == "feedback") else X_ref
    U = strat.alpha[None, k0:n, :] * Xs[:, :-1, None] + strat.beta[None, k0:n, :]
    if spike is not None:
        ks, ke = spike.window(spec.grid)
        U[:, ks - k0:ke - k0, _player_slice(spec, spike.player)] += spike.v
    return U


def _increments(spec, seed, lo, hi, k0):
    g = spec.grid
    return _kernels.normal_increments(seed, np.arange(lo, hi), k0, g.n_steps - k0, spec.d, g.dt)


def _simulate_chunk(spec, coeffs, seed, lo, hi, k0, x_start):
    dW = _increments(spec, seed, lo, hi, k0)
    a, f, c, g = (arr[k0:] for arr in coeffs)
    x = np.broadcast_to(np.asarray(x_start, dtype=float), (hi - lo,))
    return dW, _kernels.affine_em(x, a, f, c, g, dW, spec.grid.dt)


def _spike_delta(spec, strat, coeffs, cfg, X, dW, k0, convention):
    """Perturbation ``delta = X^eps - X*`` on steps ``ks .. n`` for one chunk."""
    ks, ke = cfg.window(spec.grid)
    fv, gv = _spike_forcing(spec, cfg, ks, ke)
    dt = spec.grid.dt
    dWw = dW[:, ks - k0:, :]
    zero = np.zeros(X.shape[0])
    if convention == "open_loop":
        return _kernels.affine_em(zero, spec.A[ks:-1], fv, spec.C[ks:-1], gv, dWw, dt), ks, ke
    if convention == "feedback":
        a, f, c, g = (arr[ks:] for arr in coeffs)
        Xp = _kernels.affine_em(X[:, ks - k0], a, f + fv, c, g + gv, dWw, dt)
        return Xp - X[:, ks - k0:], ks, ke
    raise ValueError(f"convention must be one of {CONVENTIONS}")


# ---------------------------------------------------------------------------
# public simulation API


def simulate(spec: ProblemSpec, strat, n_paths: int, base_seed: int = 42, *,
             t: float = 0.0, x_t: float | None = None) -> PathBatch:
    """Euler-Maruyama paths of the closed-loop state from ``(t, x_t)`` (default ``(0, x0)``)."""
    k0 = spec.grid.index_of(t)
    x_start = spec.x0 if x_t is None else float(x_t)
    coeffs = _closed_loop(spec, strat)
    parts = _map_chunks(
        lambda lo, hi: _simulate_chunk(spec, coeffs, base_seed, lo, hi, k0, x_start)[1], n_paths)
    return PathBatch(spec, strat, np.concatenate(parts), int(base_seed), k0)


def spike(batch: PathBatch, cfg: SpikeConfig, spec: ProblemSpec | None = None, strat=None,
          convention: str = "open_loop") -> PathBatch:
    """Re-simulate ``batch`` with ``u_i += v`` on ``[t, t+eps)`` using the same increments.

    ``open_loop``: the perturbed state is ``X* + delta`` where ``delta`` solves
    the linear variational SDE and every other control is held at its
    realised value.  ``feedback``: both players keep applying their feedback
    rules to the perturbed state, the spiking player adding ``v``.
    """
    spec = spec or batch.spec
    strat = strat or batch.strat
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    ks, _ = cfg.window(spec.grid)
    if ks < batch.k0:
        raise ValueError("spike starts before the batch")
    if not np.any(cfg.v):
        return PathBatch(spec, strat, batch.X, batch.base_seed, batch.k0, cfg, convention, batch.X)
    coeffs = _closed_loop(spec, strat)
    X = batch.X

    def run(lo, hi):
        dW = _increments(spec, batch.base_seed, lo, hi, batch.k0)
        delta, ks_, _ = _spike_delta(spec, strat, coeffs, cfg, X[lo:hi], dW, batch.k0, convention)
        Xp = X[lo:hi].copy()
        Xp[:, ks_ - batch.k0:] += delta
        return Xp

    Xp = np.concatenate(_map_chunks(run, batch.n_paths))
    return PathBatch(spec, strat, Xp, batch.base_seed, batch.k0, cfg, convention, X)


def expected_state(spec: ProblemSpec, strat, t: float = 0.0, x_t: float | None = None) -> np.ndarray:
    """``m(s) = E_t[X_s]`` on grid points ``s >= t`` by RK4 of the mean ODE."""
    k0 = spec.grid.index_of(t)
    x = spec.x0 if x_t is None else float(x_t)
    hg = spec.half_grid()
    a_h, b_h = strat.half()
    rate = hg.A + np.einsum("ki,ki->k", hg.B, a_h)
    drift = np.einsum("ki,ki->k", hg.B, b_h) + hg.b
    Y = rk4_forward(lambda j, y: rate[j] * y + drift[j], [x], k0, spec.grid.n_steps, spec.grid.dt)
    return Y[:, 0]


# ---------------------------------------------------------------------------
# cost functionals


def _running_cost(spec, player, X, U, k0):
    """Per-path ``1/2 int (Q X^2 + u_i'R_i u_i) ds``: trapezoid for the state, left point for controls."""
    dt = spec.grid.dt
    n = spec.grid.n_steps
    Q = (spec.Q1 if player == 1 else spec.Q2)[k0:]
    R = (spec.R1 if player == 1 else spec.R2)[k0:n]
    QX = Q * X * X
    state = dt * (0.5 * (QX[:, 0] + QX[:, -1]) + QX[:, 1:-1].sum(axis=1))
    ui = U[:, :, _player_slice(spec, player)]
    ctrl = dt * np.einsum("pka,kab,pkb->p", ui, R, ui)
    return 0.5 * (state + ctrl)


def _valid_mask(X):
    ok = np.all(np.isfinite(X), axis=1)
    bad = X.shape[0] - int(ok.sum())
    if bad > MAX_INVALID_FRACTION * X.shape[0]:
        raise errors.InvalidPath(f"{bad} of {X.shape[0]} paths became non-finite")
    return ok


def cost(spec: ProblemSpec, batch: PathBatch, player: int, t_index: int = 0):
    """``(mean, std_err)`` of ``J_i`` from the batch start state.

    The terms that are non-linear in ``E[X_T]`` use the batch mean (plug-in);
    ``std_err`` comes from the delta-method influence function.
    """
    if t_index != batch.k0:
        raise ValueError("cost is evaluated from the batch start; use nested batches for t > 0")
    pl = spec.player(player)
    ok = _valid_mask(batch.X)
    x_t = batch.X[ok, 0]
    L = np.empty(batch.n_paths)

    def run(lo, hi):
        X = batch.X[lo:hi]
        Xr = None if batch.X_ref is None else batch.X_ref[lo:hi]
        U = _controls(spec, batch.strat, X, batch.k0, batch.spike, batch.convention, Xr)
        return _running_cost(spec, player, X, U, batch.k0)

    L[:] = np.concatenate(_map_chunks(run, batch.n_paths))
    X_T = batch.X[ok, -1]
    L = L[ok] + 0.5 * pl["G"] * X_T ** 2 - (pl["lam"] * x_t + pl["mu"]) * X_T
    m = X_T.mean()
    mean = L.mean() - 0.5 * pl["h"] * m * m
    psi = L - pl["h"] * m * X_T
    return float(mean), float(psi.std(ddof=1) / math.sqrt(len(psi)))


# ---------------------------------------------------------------------------
# spike verification


@dataclass(frozen=True)
class GapEstimate:
    mean: float
    std_err: float
    n_paths: int
    first_order_pred: float
    plugin_bias: float = 0.0
    cfg: SpikeConfig | None = None

    @property
    def residual(self) -> float:
        return self.mean - self.first_order_pred


def h_matrix(spec: ProblemSpec, sol, s: float):
    """``H_i(s) = R_i(s) + P_i(s) D_i(s)'D_i(s)`` for both players."""
    out = []
    for i in (1, 2):
        P = float(np.interp(s, spec.grid.points, getattr(sol, f"P{i}")))
        Ri = _interp_nodes(spec, getattr(spec, f"R{i}"), s)
        Di = _interp_nodes(spec, getattr(spec, f"D{i}"), s)
        H = Ri + P * Di.T @ Di
        lo = float(np.linalg.eigvalsh(0.5 * (H + H.T)).min())
        if lo < -NOT_PSD_TOL:
            raise errors.NotPSD(f"H_{i}(s={s!r}) has eigenvalue {lo!r}")
        out.append(H)
    return out[0], out[1]


def _interp_nodes(spec, arr, s):
    pts = spec.grid.points
    flat = arr.reshape(len(pts), -1)
    return np.array([np.interp(s, pts, flat[:, j]) for j in range(flat.shape[1])]).reshape(arr.shape[1:])


def _h_nodes(spec, P, player):
    R = spec.R1 if player == 1 else spec.R2
    D = spec.D1 if player == 1 else spec.D2
    return R + P[:, None, None] * np.einsum("kji,kjm->kim", D, D)


def first_order_pred(spec: ProblemSpec, strat, cfg: SpikeConfig, x_t: float | None = None,
                     adj: PolicyAdjoint | None = None, P=None) -> float:
    """``int_t^{t+eps} [<E_t Lambda_i(s;t), v> + 1/2 <H_i(s) v, v>] ds`` from ODE data only.

    The integral is the left-point sum over the window steps, mirroring the
    piecewise-constant spike of the Euler scheme.
    """
    if not np.any(cfg.v):
        return 0.0
    ks, ke = cfg.window(spec.grid)
    x = spec.x0 if x_t is None else float(x_t)
    adj = adj or policy_adjoint(spec, strat)
    if P is None:
        P = solve_P(spec)[cfg.player - 1]
    m = np.full(spec.grid.n_steps + 1, x)
    m[ks:] = expected_state(spec, strat, cfg.t, x)
    lam = expected_lambda(spec, strat, adj, cfg.player, m, x)[ks:ke]
    H = _h_nodes(spec, np.asarray(P), cfg.player)[ks:ke]
    f = lam @ cfg.v + 0.5 * np.einsum("a,kab,b->k", cfg.v, H, cfg.v)
    return float(spec.grid.dt * f.sum())


def _gap_terms(spec, strat, coeffs, cfg, X, dW, k0, convention, x_t):
    """Per-path ``Delta L`` (linear part of the cost change) and ``delta_T``."""
    delta, ks, ke = _spike_delta(spec, strat, coeffs, cfg, X, dW, k0, convention)
    pl = spec.player(cfg.player)
    dt = spec.grid.dt
    n = spec.grid.n_steps
    sl = _player_slice(spec, cfg.player)
    Xw = X[:, ks - k0:]
    Q = (spec.Q1 if cfg.player == 1 else spec.Q2)[ks:]
    R = (spec.R1 if cfg.player == 1 else spec.R2)[ks:n]
    q = Q * delta * (2.0 * Xw + delta)
    state = dt * (0.5 * (q[:, 0] + q[:, -1]) + q[:, 1:-1].sum(axis=1))
    u = strat.alpha[None, ks:n, sl] * Xw[:, :-1, None] + strat.beta[None, ks:n, sl]
    du = np.zeros_like(u)
    du[:, : ke - ks] += cfg.v
    if convention == "feedback":
        du += strat.alpha[None, ks:n, sl] * delta[:, :-1, None]
    ctrl = dt * np.einsum("pka,kab,pkb->p", du, R, 2.0 * u + du)
    dT = delta[:, -1]
    dL = 0.5 * (state + ctrl) + 0.5 * pl["G"] * dT * (2.0 * Xw[:, -1] + dT) - (pl["lam"] * x_t + pl["mu"]) * dT
    return dL, dT


def _reduce_gap(spec, player, X_T, dL, dT):
    h = spec.player(player)["h"]
    m = X_T.mean()
    dbar = dT.mean()
    mean = dL.mean() - 0.5 * h * dbar * (2.0 * m + dbar)
    psi = dL - h * ((m + dbar) * dT + dbar * X_T)
    se = psi.std(ddof=1) / math.sqrt(len(psi))
    var_base = X_T.var(ddof=1) / len(X_T)
    var_pert = (X_T + dT).var(ddof=1) / len(X_T)
    return float(mean), float(se), float(-0.5 * h * (var_pert - var_base))


def _gaps_from(spec, strat, cfgs, n_paths, seed, k0, x_start, convention):
    coeffs = _closed_loop(spec, strat)

    def run(lo, hi):
        dW, X = _simulate_chunk(spec, coeffs, seed, lo, hi, k0, x_start)
        terms = [_gap_terms(spec, strat, coeffs, c, X, dW, k0, convention, X[:, 0]) for c in cfgs]
        return X[:, -1], terms

    parts = _map_chunks(run, n_paths)
    X_T = np.concatenate([p[0] for p in parts])
    ok = np.isfinite(X_T)
    out = []
    for j, c in enumerate(cfgs):
        dL = np.concatenate([p[1][j][0] for p in parts])
        dT = np.concatenate([p[1][j][1] for p in parts])
        ok_j = ok & np.isfinite(dL) & np.isfinite(dT)
        if (~ok_j).sum() > MAX_INVALID_FRACTION * n_paths:
            raise errors.InvalidPath(f"{int((~ok_j).sum())} of {n_paths} paths became non-finite")
        out.append(_reduce_gap(spec, c.player, X_T[ok_j], dL[ok_j], dT[ok_j]))
    return out, X_T


def verify_many(spec: ProblemSpec, strat, sol, cfgs, n_paths: int = 100_000, base_seed: int = 42,
                convention: str = "open_loop", n_outer: int = 64) -> list[GapEstimate]:
    """Gap estimates for several spikes sharing the same base paths (common random numbers).

    Spikes at ``t = 0`` use one batch from ``x0``.  For ``t > 0`` the state
    ``X*_t`` is random: ``n_outer`` outer paths reach ``t`` and each seeds an
    inner batch of ``n_paths // n_outer`` paths; the reported gap and
    prediction are averages over outer states and the standard error is
    that of the outer average.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    adj = policy_adjoint(spec, strat)
    P = solve_P(spec) if sol is None else (sol.P1, sol.P2)
    results: dict[int, GapEstimate] = {}
    by_t: dict[int, list[int]] = {}
    for j, c in enumerate(cfgs):
        c.window(spec.grid)
        by_t.setdefault(spec.grid.index_of(c.t), []).append(j)
    for ks, idx in sorted(by_t.items()):
        group = [cfgs[j] for j in idx]
        live = [c for c in group if np.any(c.v)]
        if ks == 0:
            stats, _ = _gaps_from(spec, strat, live, n_paths, base_seed, 0, spec.x0, convention)
            it = iter(stats)
            for j, c in zip(idx, group):
                if not np.any(c.v):
                    results[j] = GapEstimate(0.0, 0.0, n_paths, 0.0, 0.0, c)
                    continue
                mean, se, bias = next(it)
                pred = first_order_pred(spec, strat, c, spec.x0, adj, P[c.player - 1])
                results[j] = GapEstimate(mean, se, n_paths, pred, bias, c)
            continue
        outer = simulate(spec, strat, n_outer, base_seed)
        x_states = outer.X[:, ks]
        n_inner = max(2, n_paths // n_outer)
        per_outer = []
        for o, x in enumerate(x_states):
            stats, _ = _gaps_from(spec, strat, live, n_inner, derive_seed(base_seed, o), ks, x, convention)
            preds = [first_order_pred(spec, strat, c, x, adj, P[c.player - 1]) for c in live]
            per_outer.append((stats, preds))
        it = 0
        for j, c in zip(idx, group):
            if not np.any(c.v):
                results[j] = GapEstimate(0.0, 0.0, n_inner * n_outer, 0.0, 0.0, c)
                continue
            g = np.array([po[0][it][0] for po in per_outer])
            b = np.array([po[0][it][2] for po in per_outer])
            pr = np.array([po[1][it] for po in per_outer])
            it += 1
            results[j] = GapEstimate(float(g.mean()), float(g.std(ddof=1) / math.sqrt(len(g))),
                                     n_inner * n_outer, float(pr.mean()), float(b.mean()), c)
    return [results[j] for j in range(len(cfgs))]


def verify_equilibrium(spec: ProblemSpec, strat, sol, cfg: SpikeConfig, n_paths: int = 100_000,
                       base_seed: int = 42, convention: str = "open_loop",
                       n_outer: int = 64) -> GapEstimate:
    """Cost gap ``J_i(spiked) - J_i(base)`` with its analytic first-order prediction."""
    return verify_many(spec, strat, sol, [cfg], n_paths, base_seed, convention, n_outer)[0]


def unit_spikes(spec: ProblemSpec, t: float, eps_list, players=(1, 2)) -> list[SpikeConfig]:
    """``+-e_j`` spikes for every player, direction and window length."""
    out = []
    for i in players:
        for eps in eps_list:
            for j in range(spec.l):
                for sign in (1.0, -1.0):
                    v = np.zeros(spec.l)
                    v[j] = sign
                    out.append(SpikeConfig(t, eps, v, i))
    return out


def fit_eps2(eps, gaps, preds, std_errs):
    """Fit ``gap - pred = C eps^2`` by weighted least squares; return ``(C, ok, residuals)``.

    ``ok`` holds when every residual is within ``max(3 se, |C| eps^2)`` and
    every gap is above ``-3 se``.
    """
    eps = np.asarray(eps, dtype=float)
    r = np.asarray(gaps, dtype=float) - np.asarray(preds, dtype=float)
    se = np.asarray(std_errs, dtype=float)
    w = 1.0 / np.maximum(se, 1e-300) ** 2
    x = eps ** 2
    C = float(np.sum(w * x * r) / np.sum(w * x * x))
    ok = bool(np.all(np.abs(r) <= np.maximum(3.0 * se, abs(C) * x))
              and np.all(np.asarray(gaps) >= -3.0 * se))
    return C, ok, r


# ---------------------------------------------------------------------------
# variation processes


@dataclass(frozen=True)
class VariationReport:
    eps: float
    sup_Y2: float
    sup_Y2_se: float
    sup_Z2: float
    sup_Z2_se: float
    max_abs_mean_Y: float
    max_mean_Y_over_se: float


def variation_processes(spec: ProblemSpec, strat, cfg: SpikeConfig, n_paths: int = 100_000,
                        base_seed: int = 42) -> VariationReport:
    """Moments of the diffusion-forced (``Y``) and drift-forced (``Z``) parts of the spike response."""
    ks, ke = cfg.window(spec.grid)
    fv, gv = _spike_forcing(spec, cfg, ks, ke)
    A, C = spec.A[ks:-1], spec.C[ks:-1]
    dt = spec.grid.dt
    zf, zg = np.zeros_like(fv), np.zeros_like(gv)

    def run(lo, hi):
        dW = _increments(spec, base_seed, lo, hi, ks)
        zero = np.zeros(hi - lo)
        Y = _kernels.affine_em(zero, A, zf, C, gv, dW, dt)
        Z = _kernels.affine_em(zero, A, fv, C, zg, dW, dt)
        return (Y * Y).max(axis=1), (Z * Z).max(axis=1), Y

    parts = _map_chunks(run, n_paths)
    sY = np.concatenate([p[0] for p in parts])
    sZ = np.concatenate([p[1] for p in parts])
    Y = np.concatenate([p[2] for p in parts])
    mY = Y.mean(axis=0)
    seY = Y.std(axis=0, ddof=1) / math.sqrt(n_paths)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(seY > 0, np.abs(mY) / seY, np.where(mY == 0, 0.0, np.inf))
    rt = math.sqrt(n_paths)
    return VariationReport(
        eps=float(cfg.eps),
        sup_Y2=float(sY.mean()), sup_Y2_se=float(sY.std(ddof=1) / rt),
        sup_Z2=float(sZ.mean()), sup_Z2_se=float(sZ.std(ddof=1) / rt),
        max_abs_mean_Y=float(np.abs(mY).max()), max_mean_Y_over_se=float(ratio.max()),
    )
