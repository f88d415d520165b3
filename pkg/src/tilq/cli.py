"""Command-line interface: solve, simulate and verify linear feedback equilibria.

Exit codes: 0 success, 2 invalid or unsupported input, 3 solver or
simulation failure, 4 a verification check failed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _kernels, errors, fbsde, mc
from .io import read_csv, write_csv, write_manifest
from .model import CONSTANT_NAMES, FUNCTION_NAMES, ProblemSpec, check_conditions, mtilde_bounds
from .riccati import BOUND_RTOL, COND_MAX, DIV_TOL, RiccatiSolution, solve_all
from .strategy import FeedbackStrategy, feedback, lambda_diag_grid

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4

LAMBDA_TOL = 1e-8
TOLERANCES = {
    "cond_max": COND_MAX,
    "div_tol": DIV_TOL,
    "bound_rtol": BOUND_RTOL,
    "lambda_diag_tol": LAMBDA_TOL,
    "gap_sigmas": 3.0,
    "bsde_sigmas": 4.0,
    "bsde_dt_multiple": 5.0,
    "max_invalid_fraction": mc.MAX_INVALID_FRACTION,
}


def _log(msg):
    print(msg, file=sys.stderr)


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


class Run:
    """Shared state of one command: config, spec and manifest bookkeeping."""

    def __init__(self, args, command):
        self.args = args
        self.command = command
        self.t0 = time.perf_counter()
        self.out = Path(args.out)
        raw = Path(args.config).read_bytes()
        self.config_sha = hashlib.sha256(raw).hexdigest()
        try:
            cfg = json.loads(raw)
            self.spec = ProblemSpec.from_dict(cfg, n_steps=args.steps)
        except (ValueError, KeyError, TypeError) as exc:
            raise errors.ValidationError([f"config: {exc}"]) from exc
        self.files = []

    def csv(self, name, header, rows):
        self.files.append(name)
        write_csv(self.out / name, header, rows)

    def manifest(self, **extra):
        a = self.args
        identity = {
            "command": self.command,
            "config": str(a.config),
            "config_sha256": self.config_sha,
            "n_steps": self.spec.grid.n_steps,
            "T": self.spec.grid.T,
            "base_seed": a.seed,
            "n_paths": a.paths,
            "eps": _floats(a.eps),
            "t": _floats(a.t),
            "backend": _kernels.BACKEND,
            "chunk": mc.CHUNK,
            "tolerances": TOLERANCES,
            "tool_version": __version__,
            "outputs": sorted(self.files),
        }
        identity.update(extra)
        runtime = {
            "wall_clock_s": time.perf_counter() - self.t0,
            "threads": mc.n_workers(),
            "python": platform.python_version(),
            "numpy": np.__version__,
        }
        write_manifest(self.out / "manifest.json", {"identity": identity, "runtime": runtime})


# ---------------------------------------------------------------------------
# row builders


def _riccati_rows(sol: RiccatiSolution):
    return ["s", *sol.COLUMNS], sol.table().tolist()


def _strategy_rows(strat: FeedbackStrategy):
    return strat.columns(), strat.table().tolist()


def _condition_rows(spec):
    rep = check_conditions(spec)
    rows = [[name, ok, value] for name, ok, value in rep.checks]
    rows.append(["overall", rep.overall, rep.lambda_fit])
    rows.append(["info:case", "na", rep.case_tag])
    rows.append(["info:lambda_fit", "na", rep.lambda_fit])
    rows.append(["info:lambda_residual", "na", rep.lambda_residual])
    for k, v in rep.info.items():
        rows.append([f"info:{k}", "na", v])
    return ["check", "passed", "value"], rows, rep


def _load_strategy(run, sol):
    if run.args.strategy:
        header, data = read_csv(run.args.strategy)
        strat = FeedbackStrategy.from_table(run.spec.grid, data)
        if strat.alpha.shape[1] != 2 * run.spec.l:
            raise errors.ValidationError(["strategy file has the wrong number of columns"])
        return strat
    return feedback(run.spec, sol)


def _lambda_norm(spec, sol, strat, t, n_paths, seed):
    """``max ||Lambda(t;t)||_inf`` and its scaled pass flag over ``x in {0, 1, X*_t samples}``."""
    k = spec.grid.index_of(t)
    sample = mc.simulate(spec, strat, min(16, n_paths), seed).X[:, k] if t > 0 else np.array([spec.x0])
    xs = np.concatenate([[0.0, 1.0], sample])
    L = np.abs(lambda_diag_grid(spec, sol, strat, xs)[k])
    raw = float(L.max())
    ok = bool(np.all(L.max(axis=1) <= LAMBDA_TOL * (1.0 + np.abs(xs))))
    return raw, ok


def _fbsde_rows(run, sol, strat):
    a = run.args
    rows = []
    ok_all = True
    for t in _floats(a.t):
        rep = fbsde.bsde_residual(run.spec, sol, strat, t, a.paths, a.seed)
        lam, lam_ok = _lambda_norm(run.spec, sol, strat, t, a.paths, a.seed)
        ok = rep.passed and lam_ok
        ok_all &= ok
        if not ok:
            _log(f"fbsde check failed at t={t}: residual={rep.residual.tolist()} "
                 f"tol={rep.tolerance.tolist()} lambda_diag={lam:.3e}")
        rows.append([t, rep.residual[0], rep.residual[1], rep.std_err[0], rep.std_err[1], lam])
    header = ["t", "residual_p1", "residual_p2", "std_err_p1", "std_err_p2", "lambda_diag_inf_norm"]
    return header, rows, ok_all


def _spike_list(spec, ts, eps_list, null):
    """``(v_index, cfg)`` pairs: index 0 is the null spike, ``2j+1``/``2j+2`` are ``+e_j``/``-e_j``."""
    out = []
    for t in ts:
        for player in (1, 2):
            for eps in eps_list:
                if null:
                    out.append((0, mc.SpikeConfig(t, eps, np.zeros(spec.l), player)))
                for j in range(spec.l):
                    for s, sign in enumerate((1.0, -1.0)):
                        v = np.zeros(spec.l)
                        v[j] = sign
                        out.append((2 * j + 1 + s, mc.SpikeConfig(t, eps, v, player)))
    return out


def _verify_rows(run, sol, strat):
    a = run.args
    spikes = _spike_list(run.spec, _floats(a.t), _floats(a.eps), a.null_spike)
    ests = mc.verify_many(run.spec, strat, sol, [c for _, c in spikes], a.paths, a.seed,
                          a.convention, a.outer)
    # fit C eps^2 per (player, t, direction) across the eps ladder
    groups = {}
    for j, (vi, c) in enumerate(spikes):
        groups.setdefault((c.player, c.t, vi), []).append(j)
    passed = [True] * len(spikes)
    for key, idx in groups.items():
        if key[2] == 0:
            for j in idx:
                passed[j] = ests[j].mean == 0.0
            continue
        e = [ests[j] for j in idx]
        C, _, r = mc.fit_eps2([x.cfg.eps for x in e], [x.mean for x in e],
                              [x.first_order_pred for x in e], [x.std_err for x in e])
        for j, x, rj in zip(idx, e, r):
            tol = max(3.0 * x.std_err, abs(C) * x.cfg.eps ** 2)
            passed[j] = bool(x.mean >= -3.0 * x.std_err and abs(rj) <= tol)
    rows = []
    for j, (vi, c) in enumerate(spikes):
        x = ests[j]
        rows.append([c.player, c.t, c.eps, vi, x.mean, x.std_err, x.first_order_pred, passed[j]])
        if not passed[j]:
            _log(f"spike check failed: player={c.player} t={c.t} eps={c.eps} v_index={vi} "
                 f"gap={x.mean:.6e} se={x.std_err:.3e} pred={x.first_order_pred:.6e}")
    header = ["player", "t", "eps", "v_index", "mc_gap", "std_err", "first_order_pred", "pass"]
    return header, rows, all(passed)


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args):
    run = Run(args, "solve")
    sol = solve_all(run.spec)
    strat = feedback(run.spec, sol)
    run.csv("riccati.csv", *_riccati_rows(sol))
    run.csv("strategy.csv", *_strategy_rows(strat))
    header, rows, rep = _condition_rows(run.spec)
    run.csv("conditions.csv", header, rows)
    if not rep.overall:
        _log(f"existence conditions not met: {', '.join(rep.failed())}")
    run.manifest()
    return EXIT_OK


def cmd_strategy(args):
    run = Run(args, "strategy")
    sol = solve_all(run.spec)
    run.csv("strategy.csv", *_strategy_rows(feedback(run.spec, sol)))
    run.manifest()
    return EXIT_OK


def cmd_check_conditions(args):
    run = Run(args, "check-conditions")
    header, rows, rep = _condition_rows(run.spec)
    run.csv("conditions.csv", header, rows)
    run.manifest()
    _log(f"case={rep.case_tag} overall={'pass' if rep.overall else 'fail'}")
    return EXIT_OK


def cmd_simulate(args):
    run = Run(args, "simulate")
    sol = solve_all(run.spec)
    strat = _load_strategy(run, sol)
    batch = mc.simulate(run.spec, strat, args.paths, args.seed)
    ok = mc._valid_mask(batch.X)
    X = batch.X[ok]
    m = mc.expected_state(run.spec, strat)
    rows = [[s, mu, sd, mo] for s, mu, sd, mo in
            zip(run.spec.grid.points, X.mean(axis=0), X.std(axis=0, ddof=1), m)]
    run.csv("simulate.csv", ["s", "mean_X", "std_X", "ode_mean_X"], rows)
    crow = []
    for i in (1, 2):
        mean, se = mc.cost(run.spec, batch, i)
        crow.append([i, mean, se])
    run.csv("cost.csv", ["player", "cost", "std_err"], crow)
    if args.per_path:
        n = min(args.per_path, batch.n_paths)
        U = mc._controls(run.spec, strat, batch.X[:n], 0, None, "open_loop", None)
        U = np.concatenate([U, np.full((n, 1, U.shape[2]), np.nan)], axis=1)
        header = ["path", "s", "X"] + [f"u_{j + 1}" for j in range(U.shape[2])]
        prow = [[p, s, batch.X[p, k], *U[p, k]] for p in range(n)
                for k, s in enumerate(run.spec.grid.points)]
        run.csv("paths.csv", header, prow)
    run.manifest(invalid_paths=int((~ok).sum()))
    return EXIT_OK


def cmd_verify(args):
    run = Run(args, "verify")
    sol = solve_all(run.spec)
    strat = _load_strategy(run, sol)
    header, rows, ok_gap = _verify_rows(run, sol, strat)
    run.csv("verify.csv", header, rows)
    header, rows, ok_bsde = _fbsde_rows(run, sol, strat)
    run.csv("fbsde.csv", header, rows)
    run.manifest(convention=args.convention, n_outer=args.outer, null_spike=args.null_spike,
                 strategy=args.strategy)
    return EXIT_OK if (ok_gap and ok_bsde) else EXIT_VERIFY


def cmd_fbsde_check(args):
    run = Run(args, "fbsde-check")
    sol = solve_all(run.spec)
    strat = _load_strategy(run, sol)
    header, rows, ok = _fbsde_rows(run, sol, strat)
    run.csv("fbsde.csv", header, rows)
    run.manifest(strategy=args.strategy)
    return EXIT_OK if ok else EXIT_VERIFY


SCALE_SUFFIX = "_scale"


def _with_param(spec: ProblemSpec, name: str, value: float) -> ProblemSpec:
    if name in CONSTANT_NAMES or name == "x0":
        return spec.replace(**{name: float(value)})
    if name == "R_scale":
        return spec.replace(R1=value * spec.R1, R2=value * spec.R2)
    if name == "Q_scale":
        return spec.replace(Q1=value * spec.Q1, Q2=value * spec.Q2)
    if name.endswith(SCALE_SUFFIX) and name[: -len(SCALE_SUFFIX)] in FUNCTION_NAMES:
        f = name[: -len(SCALE_SUFFIX)]
        return spec.replace(**{f: value * getattr(spec, f)})
    raise errors.ValidationError([f"unknown sweep parameter {name!r}"])


def _sweep_values(args):
    if args.values:
        return _floats(args.values)
    if args.range:
        parts = args.range.split(":")
        lo, hi = float(parts[0]), float(parts[1])
        num = int(parts[2]) if len(parts) > 2 else 11
        return np.linspace(lo, hi, num).tolist()
    raise errors.ValidationError(["sweep needs --values or --range"])


def cmd_sweep(args):
    run = Run(args, "sweep")
    values = _sweep_values(args)
    _with_param(run.spec, args.param, values[0])
    rows = []
    for value in values:
        spec = _with_param(run.spec, args.param, value)
        rep = check_conditions(spec)
        code, m10, inb, msg = EXIT_OK, float("nan"), False, ""
        try:
            sol = solve_all(spec, check_bounds=False)
            L1, L2 = mtilde_bounds(spec)
            lo, hi = L1 - BOUND_RTOL * abs(L1), L2 + BOUND_RTOL * abs(L2)
            m10 = float(sol.M1[0])
            inb = bool(np.all((sol.Mtilde >= lo) & (sol.Mtilde <= hi)))
        except (errors.ValidationError, errors.UnsupportedSpec) as exc:
            code, msg = EXIT_INPUT, str(exc)
        except errors.SolverError as exc:
            code, msg = EXIT_SOLVER, str(exc)
        rows.append([args.param, value, rep.overall, code == EXIT_OK, code, m10, inb,
                     msg.replace(",", ";")])
    header = ["param", "value", "conditions_pass", "solver_ok", "exit_code", "M1_0",
              "Mtilde_in_bounds", "error"]
    run.csv("sweep.csv", header, rows)
    run.manifest(param=args.param, values=values)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tilq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tilq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="problem JSON")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=42, help="base seed (unsigned 64-bit)")
        p.add_argument("--paths", type=int, default=100_000, help="Monte-Carlo paths")
        p.add_argument("--steps", type=int, default=None, help="override the config's n_steps")
        p.add_argument("--eps", default="0.1,0.05,0.025", help="comma-separated spike lengths")
        p.add_argument("--t", default="0", help="comma-separated evaluation times")
        p.set_defaults(func=func)
        return p

    add("solve", cmd_solve, "solve the Riccati system and synthesise the feedback")
    add("strategy", cmd_strategy, "write the feedback coefficients only")
    add("check-conditions", cmd_check_conditions, "evaluate the existence hypotheses")
    p = add("simulate", cmd_simulate, "simulate the closed-loop state")
    p.add_argument("--strategy", default=None, help="strategy CSV to use instead of the equilibrium")
    p.add_argument("--per-path", type=int, default=0, metavar="N", help="also write the first N paths")
    p = add("verify", cmd_verify, "spike-variation and adjoint checks")
    p.add_argument("--strategy", default=None, help="strategy CSV to verify instead of the equilibrium")
    p.add_argument("--convention", choices=mc.CONVENTIONS, default="open_loop")
    p.add_argument("--outer", type=int, default=64, help="outer states for t > 0")
    p.add_argument("--null-spike", action="store_true", help="also emit v = 0 rows (v_index 0)")
    p = add("fbsde-check", cmd_fbsde_check, "Monte-Carlo check of the adjoint BSDE")
    p.add_argument("--strategy", default=None)
    p = add("sweep", cmd_sweep, "scan one scalar parameter")
    p.add_argument("--param", required=True, help="constant name, x0, or <FUNCTION>_scale / R_scale")
    p.add_argument("--values", default=None, help="comma-separated values")
    p.add_argument("--range", default=None, help="start:stop[:num] (inclusive linspace)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except errors.ValidationError as exc:
        _log(f"validation failed: {exc}")
        return EXIT_INPUT
    except errors.UnsupportedSpec as exc:
        _log(f"unsupported: {exc}")
        return EXIT_INPUT
    except (OSError, json.JSONDecodeError) as exc:
        _log(f"input error: {exc}")
        return EXIT_INPUT
    except (errors.SolverError, errors.NotPSD, errors.InvalidPath) as exc:
        loc = f" at s={exc.s!r}" if getattr(exc, "s", None) is not None else ""
        _log(f"solver error{loc}: {exc}")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
