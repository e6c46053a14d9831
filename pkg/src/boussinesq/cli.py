"""Command-line runner.

Subcommands::

    bqsolve run <config>           windowed nonlinear solve (linear path when f = 0)
    bqsolve linear <config>        same scenario with f forced to zero
    bqsolve check <config>         inequality and cosine-family checks
    bqsolve convergence <config>   dt and grid refinement tables

Exit codes: 0 completed, 1 bad config, 2 blow-up suspected,
3 iteration failed, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .checks import run_check_suite
from .config import ScenarioConfig, load_config
from .errors import ConfigError
from .fixedpoint import (BLOWUP, COMPLETED, FAILED, ContinuationReport, amplitude_M,
                         continue_solve, window_length)
from .grid import Field, make_grid, set_threads
from .io import write_csv, write_json, write_snapshot
from .linear import SolutionTrace, solve_linear
from .nonlinearity import zero

log = logging.getLogger("boussinesq")

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_FAILED, EXIT_IO = 0, 1, 2, 3, 4
EXIT_CODES = {COMPLETED: EXIT_OK, BLOWUP: EXIT_BLOWUP, FAILED: EXIT_FAILED}


@dataclass
class RunResult:
    report: ContinuationReport
    exit_code: int
    outputs: list


def linear_report(cfg: ScenarioConfig, phi: Field, psi: Field) -> ContinuationReport:
    """Single-shot linear solve wrapped as a completed report without windows.

    Without ``solver.dt`` the step is ``T_w / 64`` with ``T_w`` the window
    length for ``f = 0``, shrunk so that it divides the horizon.
    """
    if cfg.dt is None:
        M = amplitude_M(phi, psi, cfg.p, cfg.q_inner)
        dt = window_length(M, 0.0, cfg.C0, cfg.C1) / 64
    else:
        dt = cfg.dt
    steps = max(1, int(math.ceil(cfg.horizon / dt - 1e-9)))
    dt = cfg.horizon / steps
    trace = solve_linear(cfg.operator, cfg.form, phi, psi, None, steps * dt, dt,
                         s=2.0, p=cfg.p, q=cfg.q_inner)
    n = len(trace)
    return ContinuationReport(COMPLETED, [], trace, np.zeros(n, int), np.zeros(n, int),
                              np.zeros(n), float(trace.times[-1]), math.inf)


def solve_scenario(cfg: ScenarioConfig, seed: int = 0) -> ContinuationReport:
    phi, psi = cfg.initial_data()
    if cfg.nonlinearity.is_zero:
        return linear_report(cfg, phi, psi)
    return continue_solve(phi, psi, cfg.nonlinearity, cfg.operator, cfg.form, cfg.horizon,
                          blowup_threshold=cfg.blowup_threshold, dt=cfg.dt, tol=cfg.tol,
                          max_iters=cfg.max_iters, C0=cfg.C0, C1=cfg.C1, p=cfg.p,
                          q=cfg.q_inner, steps_per_window=cfg.steps_per_window,
                          max_window=cfg.max_window, max_windows=cfg.max_windows,
                          rng_seed=seed)


def emit_outputs(report: ContinuationReport, cfg: ScenarioConfig, extra: dict | None = None
                 ) -> list[Path]:
    """Write the CSV trace, snapshots and JSON report named in ``cfg``."""
    out = []
    if cfg.csv_path is not None:
        cfg.csv_path.parent.mkdir(parents=True, exist_ok=True)
        rows = report
        if cfg.s_norm != report.trace.s:
            # the solver works in Y^{2,p}; the CSV reports L^{s,p} at exponents.s_norm
            tr = report.trace
            rows = replace(report, trace=SolutionTrace(tr.grid, tr.times, tr.u, tr.ut,
                                                       s=cfg.s_norm, p=tr.p, q=tr.q))
        out.append(write_csv(cfg.csv_path, rows))
    if cfg.snapshot_stride > 0:
        tr = report.trace
        for k in range(0, len(tr), cfg.snapshot_stride):
            for name, fld in (("u", tr.state(k)), ("ut", tr.velocity(k))):
                path = Path(cfg.snapshot_path.format(field=name, step=k))
                path.parent.mkdir(parents=True, exist_ok=True)
                out.append(write_snapshot(path, fld, float(tr.times[k])))
    if cfg.json_path is not None:
        cfg.json_path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"scenario": cfg.scenario, "config": cfg.raw, "warnings": cfg.warnings,
                   "report": report.to_dict()}
        payload.update(extra or {})
        out.append(write_json(cfg.json_path, payload))
    return out


def run_scenario(cfg: ScenarioConfig, seed: int = 0) -> RunResult:
    report = solve_scenario(cfg, seed)
    outputs = emit_outputs(report, cfg)
    return RunResult(report, EXIT_CODES[report.status], outputs)


# ---------------------------------------------------------------- refinement sweeps

def _final_state(cfg: ScenarioConfig, seed: int) -> np.ndarray:
    rep = solve_scenario(cfg, seed)
    if rep.status != COMPLETED:
        raise RuntimeError(f"refinement run ended with {rep.status}")
    return rep.trace.u[-1]


def convergence_tables(cfg: ScenarioConfig, levels: int = 4, seed: int = 0) -> dict:
    """Errors of the final state against the finest run under dt and grid refinement.

    The dt sweep starts from ``solver.dt`` (default ``horizon / 16``) and
    halves it; the grid sweep doubles ``points`` on every axis and compares
    on the coarse nodes, which every finer grid contains.
    """
    dt0 = cfg.dt if cfg.dt is not None else cfg.horizon / 16
    dts = [dt0 / 2 ** k for k in range(levels)]
    finals = [_final_state(replace(cfg, dt=dt), seed) for dt in dts]
    ref = finals[-1]
    dt_rows = []
    for dt, u in zip(dts[:-1], finals[:-1]):
        dt_rows.append({"dt": dt, "error_inf": float(np.max(np.abs(u - ref)))})
    _orders(dt_rows)

    g0 = cfg.grid
    grids = [make_grid(g0.n_dims, tuple(n * 2 ** k for n in g0.points), g0.half_width)
             for k in range(levels)]
    finals = []
    for k, grid in enumerate(grids):
        c = replace(cfg, grid=grid, dt=dts[0])
        u = _final_state(c, seed)
        sl = (slice(None),) + tuple(slice(None, None, 2 ** k) for _ in range(g0.n_dims))
        finals.append(u[sl])
    ref = finals[-1]
    grid_rows = [{"points": list(g.points), "error_inf": float(np.max(np.abs(u - ref)))}
                 for g, u in zip(grids[:-1], finals[:-1])]
    _orders(grid_rows)
    return {"dt_refinement": dt_rows, "grid_refinement": grid_rows}


def _orders(rows: list[dict]):
    for a, b in zip(rows, rows[1:]):
        ok = a["error_inf"] > 0 and b["error_inf"] > 0
        b["observed_order"] = math.log2(a["error_inf"] / b["error_inf"]) if ok else None


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bqsolve",
                                 description="Spectral solver for u_tt - L u_tt + A u = f(u).")
    ap.add_argument("--threads", type=int, default=1, help="FFT worker threads (0 = all cores)")
    ap.add_argument("--seed", type=int, default=0,
                    help="seed for sampled majorants and probe ensembles")
    ap.add_argument("--quiet", action="store_true", help="only print errors")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("run", "solve the configured scenario"),
                       ("linear", "solve with the nonlinearity forced to zero"),
                       ("check", "run the inequality checks"),
                       ("convergence", "dt and grid refinement tables")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("config", type=Path)
    return ap


def _say(quiet: bool, msg: str):
    if not quiet:
        print(msg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not 0 <= args.seed < 2 ** 64:
        print("error: --seed must fit in an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    set_threads(args.threads)
    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"cannot read config: {err}", file=sys.stderr)
        return EXIT_IO

    try:
        if args.command in ("run", "linear"):
            if args.command == "linear":
                cfg = replace(cfg, nonlinearity=zero(cfg.components))
            res = run_scenario(cfg, args.seed)
            rep = res.report
            _say(args.quiet, f"{rep.status}: t_end={rep.t_end:.6g} windows={len(rep.windows)}"
                 + (f" t*={rep.t_star:.6g}" if rep.t_star is not None else "")
                 + (f" ({rep.reason})" if rep.reason else ""))
            return res.exit_code
        if args.command == "check":
            g = cfg.grid
            reports = run_check_suite(g.n_dims, g.points[0], g.half_width[0], p=cfg.p,
                                      f=cfg.nonlinearity if not cfg.nonlinearity.is_zero
                                      else None, seed=args.seed)
            for r in reports:
                _say(args.quiet, f"{'PASS' if r.passed else 'FAIL'} {r.name}: "
                                 f"worst ratio {r.worst_ratio:.6g}")
            if cfg.json_path is not None:
                cfg.json_path.parent.mkdir(parents=True, exist_ok=True)
                write_json(cfg.json_path, {"checks": [r.to_dict() for r in reports]})
            return EXIT_OK
        tables = convergence_tables(cfg, seed=args.seed)
        for name, rows in tables.items():
            _say(args.quiet, name)
            for row in rows:
                _say(args.quiet, "  " + "  ".join(f"{k}={v}" for k, v in row.items()))
        if cfg.json_path is not None:
            cfg.json_path.parent.mkdir(parents=True, exist_ok=True)
            write_json(cfg.json_path, tables)
        return EXIT_OK
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except RuntimeError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
