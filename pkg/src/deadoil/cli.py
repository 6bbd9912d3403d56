"""``deadoil <solve|optimize|verify> --config PATH [--output DIR] [--seed N]``.

Exit status: 0 success, 2 nonconvergence, 3 configuration error,
4 verification failure. Every run writes ``summary.json``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, defaults_help, parse_config
from .control import ControlProblem, optimize
from .errors import ConfigError, NonConvergenceError, SingularMatrixError
from .grid import l2_norm, write_field_csv
from .state import residual_norm, solve_state
from .verify import DEFAULT_SEED, run_case

EXIT_OK, EXIT_NONCONVERGENCE, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3, 4

log = logging.getLogger("deadoil")


def write_jsonl(records, path):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def write_summary(out_dir: Path, summary: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def _targets(cfg: RunConfig):
    if cfg.target_from_source is not None:
        s, _ = solve_state(cfg.model, cfg.target_from_source.sample(cfg.grid), cfg.settings, cfg.method)
        return s.u, s.p
    return cfg.target_u.sample(cfg.grid), cfg.target_p.sample(cfg.grid)


def cmd_solve(cfg: RunConfig, summary: dict) -> int:
    f = cfg.source.sample(cfg.grid)
    s, history = solve_state(cfg.model, f, cfg.settings, cfg.method)
    out = cfg.output_dir
    if "csv" in cfg.formats:
        write_field_csv(s.u, out / "u.csv")
        write_field_csv(s.p, out / "p.csv")
    if "jsonl" in cfg.formats:
        write_jsonl(history, out / "residual_log.jsonl")
    summary.update(iterations=history[-1]["iter"],
                   residual=residual_norm(cfg.model, s, f),
                   nodes_outside_validity=s.outside_validity(cfg.model))
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, summary: dict) -> int:
    U, P = _targets(cfg)
    cp = ControlProblem(U, P, beta1=cfg.beta1, q0=cfg.q0, eps_smooth=cfg.eps_smooth)
    f0 = cfg.source.sample(cfg.grid)
    res = optimize(cp, cfg.model, f0, cfg.settings, cfg.optimize)
    out = cfg.output_dir
    if "csv" in cfg.formats:
        for name, fld in (("f", res.f), ("u", res.state.u), ("p", res.state.p),
                          ("e1", res.adjoint.e1), ("p1", res.adjoint.p1)):
            write_field_csv(fld, out / f"{name}.csv")
    if "jsonl" in cfg.formats:
        write_jsonl(res.history, out / "history.jsonl")
    summary.update(J=res.J, stationarity_norm=res.stationarity_norm,
                   initial_stationarity_norm=res.history[0]["stationarity_norm"],
                   iterations=res.iterations, converged=res.converged,
                   control_norm=l2_norm(res.f))
    return EXIT_OK


def cmd_verify(cfg: RunConfig, summary: dict, seed: int) -> int:
    results = {}
    for case in cfg.cases:
        rep = run_case(case, seed=seed, st=cfg.settings)
        with open(cfg.output_dir / f"report_{case}.json", "w") as fh:
            fh.write(rep.to_json() + "\n")
        results[case] = rep.passed
        log.info("%s: %s", case, "pass" if rep.passed else "FAIL")
    summary.update(cases=results, all_passed=all(results.values()))
    return EXIT_OK if all(results.values()) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="deadoil",
        description="Steady dead oil isotherm system: state solves, source optimization, verification.",
        epilog=defaults_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=("solve", "optimize", "verify"))
    p.add_argument("--config", required=True, help="sectioned key = value config file")
    p.add_argument("--output", help="output directory (overrides [output] directory)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help=f"seed for randomized verification (default {DEFAULT_SEED:#x})")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run_subcommand(cmd: str, cfg: RunConfig, seed: int = DEFAULT_SEED) -> int:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    summary = {"command": cmd, "status": "ok", "exit_code": EXIT_OK, "seed": seed,
               "grid": [cfg.grid.nx, cfg.grid.ny, cfg.grid.lx, cfg.grid.ly],
               "model": cfg.model.name}
    try:
        if cmd == "solve":
            code = cmd_solve(cfg, summary)
        elif cmd == "optimize":
            code = cmd_optimize(cfg, summary)
        else:
            code = cmd_verify(cfg, summary, seed)
        if code == EXIT_VERIFY:
            summary["status"] = "verification_failed"
    except (NonConvergenceError, SingularMatrixError) as exc:
        code = EXIT_NONCONVERGENCE
        summary.update(status="nonconvergence", error=str(exc))
    summary["exit_code"] = code
    write_summary(cfg.output_dir, summary)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, output_override=args.output)
    except ConfigError as exc:
        print(f"deadoil: config error: {exc}", file=sys.stderr)
        out = Path(args.output) if args.output else Path("output")
        write_summary(out, {"command": args.command, "status": "config_error",
                            "exit_code": EXIT_CONFIG, "error": str(exc)})
        return EXIT_CONFIG
    return run_subcommand(args.command, cfg, args.seed)


if __name__ == "__main__":
    sys.exit(main())
