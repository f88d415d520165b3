"""Game data model: time grid, coefficient storage, validation and existence checks.

All time-dependent coefficients are stored as samples on a uniform grid and
are linearly interpolated between grid points.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

FUNCTION_NAMES = ("A", "B1", "B2", "C", "D1", "D2", "b", "sigma", "Q1", "Q2", "R1", "R2")
CONSTANT_NAMES = ("G1", "G2", "h1", "h2", "lam1", "lam2", "mu1", "mu2")

PSD_EIG_TOL = 1e-12
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int
    t0: float = 0.0

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def index_of(self, s: float, tol: float = 1e-9) -> int:
        """Index of the grid point ``s``; raises if ``s`` is not on the grid."""
        k = int(round(s / self.dt))
        if k < 0 or k > self.n_steps or abs(k * self.dt - s) > tol * max(1.0, self.T):
            raise ValueError(f"time {s!r} is not a grid point of {self}")
        return k

    def steps_in(self, duration: float, tol: float = 1e-9) -> int:
        m = int(round(duration / self.dt))
        if m < 1 or abs(m * self.dt - duration) > tol * max(1.0, self.T):
            raise ValueError(f"duration {duration!r} is not a positive multiple of dt={self.dt!r}")
        return m


def _shapes(l: int, d: int) -> dict[str, tuple[int, ...]]:
    return {
        "A": (), "b": (), "Q1": (), "Q2": (),
        "B1": (l,), "B2": (l,),
        "C": (d,), "sigma": (d,),
        "D1": (d, l), "D2": (d, l),
        "R1": (l, l), "R2": (l, l),
    }


@dataclass(frozen=True)
class Coefficients:
    """Coefficients sampled at a batch of times (leading axis), players stacked.

    ``B`` is (n, 2l), ``D`` is (n, d, 2l), ``R`` is block-diagonal (n, 2l, 2l).
    """

    times: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    b: np.ndarray
    sigma: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    R: np.ndarray

    def __len__(self):
        return len(self.times)

    def at(self, j: int) -> "Coefficients":
        return Coefficients(*(getattr(self, f.name)[j] for f in dataclasses.fields(self)))


@dataclass(frozen=True)
class ProblemSpec:
    l: int
    d: int
    grid: TimeGrid
    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    b: np.ndarray
    sigma: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    G1: float = 0.0
    G2: float = 0.0
    h1: float = 0.0
    h2: float = 0.0
    lam1: float = 0.0
    lam2: float = 0.0
    mu1: float = 0.0
    mu2: float = 0.0
    x0: float = 0.0

    # -- construction -------------------------------------------------------

    @classmethod
    def from_functions(cls, l, d, T, n_steps, x0=0.0, constants=None, **functions):
        """Build a spec from constants/callables/sample arrays.

        Each function may be a constant (scalar or array of the right shape),
        a callable of time, or an array of ``n_steps + 1`` samples.  Missing
        functions default to zero.
        """
        grid = TimeGrid(float(T), int(n_steps))
        shapes = _shapes(l, d)
        s = grid.points
        arrays = {}
        for name in FUNCTION_NAMES:
            shape = shapes[name]
            value = functions.pop(name, 0.0)
            if callable(value):
                arr = np.array([np.asarray(value(si), dtype=float) for si in s])
            else:
                arr = np.asarray(value, dtype=float)
                is_samples = arr.ndim == len(shape) + 1 and arr.shape[0] == n_steps + 1
                if not is_samples:
                    if arr.size == math.prod(shape):
                        arr = arr.reshape(shape)
                    arr = np.broadcast_to(arr, (n_steps + 1, *arr.shape)).copy()
            arrays[name] = arr
        if functions:
            raise TypeError(f"unknown coefficient(s): {sorted(functions)}")
        consts = {k: float(v) for k, v in (constants or {}).items()}
        unknown = set(consts) - set(CONSTANT_NAMES)
        if unknown:
            raise TypeError(f"unknown constant(s): {sorted(unknown)}")
        return cls(l=int(l), d=int(d), grid=grid, x0=float(x0), **arrays, **consts)

    @classmethod
    def from_dict(cls, cfg: dict[str, Any], n_steps: int | None = None) -> "ProblemSpec":
        l, d = int(cfg["l"]), int(cfg["d"])
        shapes = _shapes(l, d)
        n_cfg = int(cfg["n_steps"])
        functions = {}
        for name, entry in cfg.get("functions", {}).items():
            if name not in shapes:
                raise ValueError(f"unknown function {name!r}")
            if not isinstance(entry, dict) or len(entry) != 1 or not ({"constant", "samples"} & set(entry)):
                raise ValueError(f"function {name!r} must be {{'constant': ...}} or {{'samples': [...]}}")
            if "constant" in entry:
                arr = np.asarray(entry["constant"], dtype=float)
                if arr.size == math.prod(shapes[name]):
                    arr = arr.reshape(shapes[name])
                # a wrongly shaped constant is kept as-is so validate() can report it
                functions[name] = np.broadcast_to(arr, (n_cfg + 1, *arr.shape)).copy()
            else:
                functions[name] = np.asarray(entry["samples"], dtype=float)
        spec = cls.from_functions(
            l, d, cfg["T"], n_cfg, x0=cfg.get("x0", 0.0),
            constants=cfg.get("constants", {}), **functions,
        )
        if n_steps is not None and n_steps != n_cfg:
            spec = spec.regrid(n_steps)
        return spec

    @classmethod
    def load(cls, path, n_steps: int | None = None) -> "ProblemSpec":
        with open(Path(path)) as fh:
            return cls.from_dict(json.load(fh), n_steps=n_steps)

    def to_dict(self) -> dict[str, Any]:
        return {
            "l": self.l, "d": self.d, "T": self.grid.T, "n_steps": self.grid.n_steps, "x0": self.x0,
            "constants": {k: getattr(self, k) for k in CONSTANT_NAMES},
            "functions": {k: {"samples": getattr(self, k).tolist()} for k in FUNCTION_NAMES},
        }

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)

    def regrid(self, n_steps: int) -> "ProblemSpec":
        """Resample every coefficient on a uniform grid with ``n_steps`` steps."""
        new = TimeGrid(self.grid.T, int(n_steps))
        old = self.grid.points
        s = new.points
        arrays = {}
        for name in FUNCTION_NAMES:
            arr = getattr(self, name)
            flat = arr.reshape(len(old), -1)
            res = np.stack([np.interp(s, old, flat[:, j]) for j in range(flat.shape[1])], axis=1)
            arrays[name] = res.reshape((len(s), *arr.shape[1:]))
        return dataclasses.replace(self, grid=new, **arrays)

    def swap_players(self) -> "ProblemSpec":
        return dataclasses.replace(
            self, B1=self.B2, B2=self.B1, D1=self.D2, D2=self.D1, Q1=self.Q2, Q2=self.Q1,
            R1=self.R2, R2=self.R1, G1=self.G2, G2=self.G1, h1=self.h2, h2=self.h1,
            lam1=self.lam2, lam2=self.lam1, mu1=self.mu2, mu2=self.mu1,
        )

    # -- stacked views --------------------------------------------------------

    @property
    def B(self) -> np.ndarray:
        return np.concatenate([self.B1, self.B2], axis=1)

    @property
    def D(self) -> np.ndarray:
        return np.concatenate([self.D1, self.D2], axis=2)

    @property
    def R(self) -> np.ndarray:
        n, l = self.R1.shape[0], self.l
        out = np.zeros((n, 2 * l, 2 * l))
        out[:, :l, :l] = self.R1
        out[:, l:, l:] = self.R2
        return out

    def player(self, i: int) -> dict[str, Any]:
        if i not in (1, 2):
            raise ValueError("player must be 1 or 2")
        return {k: getattr(self, f"{k}{i}") for k in ("B", "D", "Q", "R", "G", "h", "lam", "mu")}

    def nodes(self) -> Coefficients:
        return Coefficients(self.grid.points, self.A, self.B, self.C, self.D, self.b,
                            self.sigma, self.Q1, self.Q2, self.R)

    def half_grid(self) -> Coefficients:
        """Coefficients at the 2n+1 points ``j*dt/2``; odd j are interval midpoints."""
        nodes = self.nodes()
        n = self.grid.n_steps
        out = []
        for f in dataclasses.fields(Coefficients):
            arr = getattr(nodes, f.name)
            half = np.empty((2 * n + 1, *arr.shape[1:]))
            half[0::2] = arr
            half[1::2] = 0.5 * (arr[:-1] + arr[1:])
            out.append(half)
        return Coefficients(*out)

    def sample(self, s) -> Coefficients:
        """Linear interpolation of all coefficients at the times ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        n, dt = self.grid.n_steps, self.grid.dt
        k = np.clip(np.floor(s / dt).astype(int), 0, n - 1)
        w = s / dt - k
        nodes = self.nodes()
        out = [s]
        for f in dataclasses.fields(Coefficients)[1:]:
            arr = getattr(nodes, f.name)
            ww = w.reshape((-1,) + (1,) * (arr.ndim - 1))
            out.append((1.0 - ww) * arr[k] + ww * arr[k + 1])
        return Coefficients(*out)


def exp_int_A(spec: ProblemSpec) -> np.ndarray:
    """``exp(int_s^T A)`` on the half grid; exact for piecewise-linear A."""
    A = spec.A
    dt = spec.grid.dt
    n = spec.grid.n_steps
    tail = np.zeros(n + 1)
    tail[:-1] = np.cumsum((0.5 * dt * (A[:-1] + A[1:]))[::-1])[::-1]
    half = np.empty(2 * n + 1)
    half[0::2] = tail
    a_mid = 0.5 * (A[:-1] + A[1:])
    half[1::2] = tail[1:] + 0.25 * dt * (a_mid + A[1:])
    return np.exp(half)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    field: str
    index: int | None
    value: float | tuple | None
    message: str

    def __str__(self):
        where = "" if self.index is None else f"[{self.index}]"
        return f"{self.field}{where}: {self.message} (value={self.value})"


def validate(spec: ProblemSpec) -> list[Violation]:
    """Return every violated standing assumption; empty iff the problem is usable."""
    out: list[Violation] = []
    n1 = spec.grid.n_steps + 1
    if spec.grid.n_steps < 2:
        out.append(Violation("n_steps", None, spec.grid.n_steps, "need n_steps >= 2"))
    if not spec.grid.T > 0:
        out.append(Violation("T", None, spec.grid.T, "need T > 0"))
    if spec.l < 1 or spec.d < 1:
        out.append(Violation("l/d", None, (spec.l, spec.d), "dimensions must be positive"))
        return out
    shapes = _shapes(spec.l, spec.d)
    bad_shape = set()
    for name in FUNCTION_NAMES:
        arr = getattr(spec, name)
        want = (n1, *shapes[name])
        if arr.shape != want:
            out.append(Violation(name, None, arr.shape, f"expected shape {want}"))
            bad_shape.add(name)
        elif not np.all(np.isfinite(arr)):
            k = int(np.argwhere(~np.isfinite(arr.reshape(n1, -1)))[0, 0])
            out.append(Violation(name, k, float("nan"), "non-finite sample"))
    for name in CONSTANT_NAMES + ("x0",):
        if not math.isfinite(getattr(spec, name)):
            out.append(Violation(name, None, getattr(spec, name), "non-finite"))
    for name in ("Q1", "Q2"):
        if name in bad_shape:
            continue
        for k in np.flatnonzero(getattr(spec, name) < 0):
            out.append(Violation(name, int(k), float(getattr(spec, name)[k]), "must be >= 0"))
    for name in ("G1", "G2"):
        if getattr(spec, name) < 0:
            out.append(Violation(name, None, getattr(spec, name), "must be >= 0"))
    for name in ("R1", "R2"):
        if name in bad_shape:
            continue
        R = getattr(spec, name)
        asym = np.max(np.abs(R - np.swapaxes(R, 1, 2)), axis=(1, 2))
        for k in np.flatnonzero(asym > SYMMETRY_TOL):
            out.append(Violation(name, int(k), float(asym[k]), "not symmetric"))
        eig = np.linalg.eigvalsh(0.5 * (R + np.swapaxes(R, 1, 2)))[:, 0]
        for k in np.flatnonzero(eig < -PSD_EIG_TOL):
            out.append(Violation(name, int(k), float(eig[k]), "not positive semidefinite"))
    return out


# ---------------------------------------------------------------------------
# existence hypotheses


def fit_lambda(spec: ProblemSpec) -> tuple[float, float]:
    """Least-squares scalar ``lam >= 0`` with ``B ~ lam * D'C`` over the grid.

    Returns ``(lam, residual)`` with the residual measured in the max norm.
    """
    B = spec.B
    DC = np.einsum("kji,kj->ki", spec.D, spec.C)
    den = float(np.sum(DC * DC))
    if den == 0.0:
        return 0.0, float(np.max(np.abs(B))) if B.size else 0.0
    lam = max(float(np.sum(B * DC)) / den, 0.0)
    return lam, float(np.max(np.abs(B - lam * DC)))


@dataclass
class ConditionReport:
    lambda_fit: float
    lambda_residual: float
    case_tag: str
    checks: list[tuple[str, bool, float]] = field(default_factory=list)
    info: dict[str, float] = field(default_factory=dict)

    @property
    def overall(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def failed(self) -> list[str]:
        return [name for name, ok, _ in self.checks if not ok]


def check_conditions(spec: ProblemSpec, tol_prop: float = 1e-9, psd_slack: float = 1e-10,
                     zero_tol: float = 1e-14) -> ConditionReport:
    """Evaluate the existence hypotheses of the reduced Riccati system on the grid.

    Gating checks: ``G1 >= h1 >= 1``, ``B = lam D'C`` and one of the two
    coefficient regimes (``R >= delta I`` with the PSD condition, or ``R == 0``
    with the scalar margin condition).  Player 2's terminal constants are
    reported in ``info`` but do not gate.
    """
    lam, resid = fit_lambda(spec)
    checks: list[tuple[str, bool, float]] = []
    checks.append(("G1>=h1>=1", spec.G1 >= spec.h1 >= 1.0, min(spec.G1 - spec.h1, spec.h1 - 1.0)))
    checks.append(("B=lambda*D'C", resid <= tol_prop, resid))

    R = spec.R
    D = spec.D
    C = spec.C
    l = spec.l
    DtD = np.einsum("kji,kjm->kim", D, D)
    DC = np.einsum("kji,kj->ki", D, C)
    C2 = np.einsum("kj,kj->k", C, C)
    r_max = float(np.max(np.abs(R)))
    r_mineig = float(np.min(np.linalg.eigvalsh(R)[:, 0]))

    if r_max <= zero_tol:
        tag = "singular_R"
        checks.append(("R==0", True, r_max))
        svals = np.linalg.svd(DtD, compute_uv=False)
        smin = float(np.min(svals[:, -1]))
        if smin <= 1e-12 * max(1.0, float(np.max(svals[:, 0]))):
            checks.append(("|C|^2-(lam+1)C'D(D'D)^-1D'C>=0", False, smin))
        else:
            proj = np.einsum("ki,ki->k", DC, np.linalg.solve(DtD, DC[..., None])[..., 0])
            margin = C2 - (lam + 1.0) * proj
            checks.append(("|C|^2-(lam+1)C'D(D'D)^-1D'C>=0", bool(np.min(margin) >= -psd_slack),
                           float(np.min(margin))))
    elif r_mineig > 0.0:
        tag = "standard_R"
        checks.append(("R>=delta*I", True, r_mineig))
        S = (C2 / (2 * l))[:, None, None] * DtD - (lam + 1.0) * np.einsum("ki,kj->kij", DC, DC)
        w = float(np.min(np.linalg.eigvalsh(S)[:, 0]))
        checks.append(("|C|^2/(2l)D'D-(lam+1)D'CC'D>=0", w >= -psd_slack, w))
    else:
        tag = "neither"
        checks.append(("R>=delta*I or R==0", False, r_mineig))

    info = {"G2": spec.G2, "h2": spec.h2, "G2-h2": spec.G2 - spec.h2}
    return ConditionReport(lam, resid, tag, checks, info)


def mtilde_bounds(spec: ProblemSpec) -> tuple[float, float]:
    """Bracket ``[L1, L2]`` for ``Mtilde = M1/M2`` built from ``Q1/Q2`` and ``G1/G2``.

    Grid points with ``Q2 == 0`` contribute ``+inf`` (or nothing when ``Q1 == 0`` too).
    """
    g = spec.G1 / spec.G2
    q1, q2 = spec.Q1, spec.Q2
    pos = q2 > 0
    ratios = list(q1[pos] / q2[pos])
    if np.any((~pos) & (q1 > 0)):
        ratios.append(math.inf)
    if not ratios:
        return g, g
    return min(min(ratios), g), max(max(ratios), g)
