"""Command-line entry point: ``qhdlab <subcommand> --config PATH [--out DIR]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig, load_config, write_record_csv, write_table_csv
from .errors import ParseError, QHDError, ValidationError
from .experiments import (
    _grid,
    admissibility_lines,
    initial_from_config,
    preset_balance,
    preset_decay,
    preset_relaxation,
    qdd_params,
    sl_params,
)
from .functionals import check_log_embedding, check_log_sobolev, check_logH2
from .qdd_solver import run_qdd
from .sl_solver import run_sl
from .spectral import TorusGrid, dump_field

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class _Log:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, msg: str) -> None:
        if not self.quiet:
            print(msg, file=sys.stderr)


def _write_lines(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n")


def cmd_run_sl(cfg: RunConfig, out: Path, log: _Log) -> int:
    init = initial_from_config(cfg)
    traj = run_sl(init.wave, sl_params(cfg))
    write_record_csv(traj.records, out / "sl_records.csv")
    lines = [f"status,{traj.status}"] + admissibility_lines(init)
    if traj.breach_time is not None:
        lines.append(f"breach_time,{traj.breach_time:.17g}")
    _write_lines(out / "sl_summary.txt", lines)
    if cfg.output.dump_fields and traj.final is not None:
        dump_field(out / "psi_final.qhdf", traj.final.psi, "psi")
    log(f"run-sl: {len(traj.records)} records, status {traj.status}")
    return EXIT_PASS if traj.status == "completed" else EXIT_FAIL


def cmd_run_qdd(cfg: RunConfig, out: Path, log: _Log) -> int:
    init = initial_from_config(cfg)
    traj = run_qdd(init.state.grid, init.state.rho, qdd_params(cfg, record_every=cfg.integrator.monitor_every))
    rows = zip(traj.times, traj.entropy, traj.hessian_sqrt, traj.quarter_grad4)
    write_table_csv(out / "qdd_records.csv", ["t", "entropy", "hessian_sqrt", "quarter_grad4"],
                    [[float(x) for x in r] for r in rows])
    monotone = traj.entropy_monotone()
    _write_lines(out / "qdd_summary.txt", [f"status,{traj.status}", f"entropy_monotone,{monotone}"])
    if cfg.output.dump_fields and traj.final is not None:
        dump_field(out / "rho_final.qhdf", traj.final, "rho")
    log(f"run-qdd: status {traj.status}, entropy monotone {monotone}")
    return EXIT_PASS if traj.status == "completed" and monotone else EXIT_FAIL


def cmd_relax_sweep(cfg: RunConfig, out: Path, log: _Log) -> int:
    report = preset_relaxation(cfg)
    report.write(out)
    ok = len(report.valid) >= 3
    if ok:
        slope = report.rate().slope
        ok = report.errors_decreasing() and 0.7 <= slope <= 1.3 and report.sandwich_holds()
        log(f"relax-sweep: fitted slope {slope:.4f}")
    else:
        log("relax-sweep: fewer than 3 usable taus")
    return EXIT_PASS if ok else EXIT_FAIL


def _inequality_rows(grid: TorusGrid, cfg: RunConfig, count: int = 20):
    rng = np.random.default_rng(cfg.initial.seed)
    x1, x2 = grid.coords()
    rows = []
    for k in range(count):
        u = np.zeros(grid.shape)
        for j1 in range(0, 4):
            for j2 in range(-3, 4):
                if j1 == 0 and j2 <= 0:
                    continue
                u += rng.standard_normal() * np.cos(2 * np.pi * (j1 * x1 + j2 * x2) + rng.uniform(0, 2 * np.pi))
        u -= np.mean(u)
        u /= np.max(np.abs(u))
        rho = 1.0 + 0.6 * u
        lhs, rhs, ok = check_logH2(grid, rho)
        rows.append([k, lhs, rhs, ok, check_log_sobolev(grid, np.sqrt(rho)), check_log_embedding(grid, u)])
    return rows


def cmd_check_inequalities(cfg: RunConfig, out: Path, log: _Log) -> int:
    rows = _inequality_rows(_grid(cfg), cfg)
    write_table_csv(out / "inequalities.csv",
                    ["sample", "logH2_lhs", "logH2_rhs", "logH2_holds", "log_sobolev_ratio", "log_embedding_ratio"],
                    rows)
    failures = sum(1 for r in rows if not r[3])
    log(f"check-inequalities: {failures} of {len(rows)} densities violate the log-Hessian bound")
    return EXIT_PASS if failures == 0 else EXIT_FAIL


def cmd_decay(cfg: RunConfig, out: Path, log: _Log) -> int:
    rep = preset_decay(cfg)
    write_record_csv(rep.trajectory.records, out / "decay_records.csv")
    _write_lines(out / "decay_summary.txt", rep.lines())
    log(f"decay: slope {rep.slope:.4g}, r^2 {rep.r_squared:.4f}, monotone {rep.monotone}")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_balance(cfg: RunConfig, out: Path, log: _Log) -> int:
    rep = preset_balance(cfg)
    _write_lines(out / "balance_table.csv", rep.lines())
    for line in rep.lines():
        log(line)
    return EXIT_PASS if rep.passed else EXIT_FAIL


COMMANDS = {
    "run-sl": cmd_run_sl,
    "run-qdd": cmd_run_qdd,
    "relax-sweep": cmd_relax_sweep,
    "check-inequalities": cmd_check_inequalities,
    "decay": cmd_decay,
    "balance": cmd_balance,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qhdlab", description="Schroedinger-Langevin / QDD simulation lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=None, help="output directory (default: [output] dir)")
        p.add_argument("--quiet", action="store_true", help="suppress progress messages")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    log = _Log(args.quiet)
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        parser.print_usage(sys.stderr)
        print(f"qhdlab: config file not found: {args.config}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, ValidationError) as exc:
        print(f"qhdlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, out, log)
    except QHDError as exc:
        print(f"qhdlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
