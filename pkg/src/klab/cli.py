"""Command-line entry point: ``klab {threshold,simulate,energy,verify,sweep}``.

Exit status is 0 on pass (including scenarios whose hypotheses are not met,
which are reported rather than asserted), 1 on a failed verdict or violated
threshold constraint, and 2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ScenarioConfig, parse_config, parse_matrix
from .errors import ConstraintViolated, KlabError, ParseError
from .io import SCHEMA_VERSION, json_text, write_csv, write_json
from .thresholds import THEOREMS, evaluate
from .verify import build_metric, build_potential, run_scenario, scenario_asymptotics, solve_config

DEFAULT_OUT = "klab-out"
CONSTANTS = ("n", "A", "a1", "a2", "a3", "a4", "mu", "delta", "delta1", "delta2")


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "__", name)


def _out_dir(args, cfg: ScenarioConfig) -> Path:
    if args.out is not None:
        return Path(args.out)
    if cfg.output_dir is not None:
        return Path(cfg.output_dir)
    return Path(DEFAULT_OUT) / _safe_name(cfg.name)


def cmd_threshold(args) -> int:
    constants = {k: getattr(args, k) for k in CONSTANTS}
    try:
        report = evaluate(args.theorem, **constants)
    except ConstraintViolated as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.json:
        sys.stdout.write(json_text(dict(report.as_dict(), schema_version=SCHEMA_VERSION)))
        return 0
    print(f"theorem = {report.theorem}")
    print(f"lambda_star = {report.lambda_star!r}")
    for name, value in report.branches.items():
        print(f"  {name} = {value!r}")
    if report.minimizer_name == "sigma":
        print(f"sigma* = {report.minimizer!r}")
    elif report.minimizer_name is not None:
        print(f"{report.minimizer_name} = {report.minimizer!r}")
    for c in report.constraints:
        print(f"constraint {c.name}: margin {c.margin!r}")
    return 0


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    M = build_metric(cfg)
    P = build_potential(cfg, M)
    from .modes import modes_table, solve_modes, sphere_norms

    modes = solve_modes(M, P, solve_config(cfg), jobs=args.jobs)
    norms = sphere_norms(M, modes)
    out = _out_dir(args, cfg)
    grid = modes[0].grid
    write_csv(out / "geometry.csv", M.table(grid))
    write_csv(out / "potential.csv", P.table(grid))
    write_csv(out / "modes.csv", modes_table(modes))
    write_csv(out / "norms.csv", norms.table())
    summary = {"schema_version": SCHEMA_VERSION, "scenario": cfg.as_dict(),
               "modes": [{"l": m.l, "nu": m.nu, "u_end": m.u[-1], "u_prime_end": m.up[-1]} for m in modes],
               "grid_points": int(grid.size)}
    write_json(out / "simulate.json", summary)
    print(f"wrote {out}")
    return 0


def cmd_energy(args) -> int:
    cfg = parse_config(args.config)
    M = build_metric(cfg)
    P = build_potential(cfg, M)
    from .energy import EnergyConfig, derivative_identity_check

    geo, _ = scenario_asymptotics(cfg, M, P)
    e = cfg.energy
    ecfg = EnergyConfig(e.version, cfg.solve.lam, geo.a4, geo.a5, e.m, e.t, e.s, e.sigma, e.anchor)
    report = derivative_identity_check(ecfg, M, P, solve_config(cfg), cfg.verify.fd_refine)
    ok = report.max_rel_error <= cfg.verify.identity_tol
    pick = slice(None, None, report.refine)
    table = {k: v[pick] for k, v in report.curve.table().items()}
    table["rel_error"] = report.rel_error
    out = _out_dir(args, cfg)
    write_csv(out / "energy.csv", table)
    summary = {"schema_version": SCHEMA_VERSION, "scenario": cfg.as_dict(),
               "identity": dict(report.as_dict(), tolerance=cfg.verify.identity_tol, passed=ok)}
    write_json(out / "energy.json", summary)
    print(f"max relative identity error {report.max_rel_error:.3e} ({'pass' if ok else 'FAIL'}); wrote {out}")
    return 0 if ok else 1


def _write_bundle(out: Path, result) -> None:
    for name, table in result.tables.items():
        write_csv(out / f"{name}.csv", table)
    write_json(out / "summary.json", result.summary)


def cmd_verify(args) -> int:
    cfg = parse_config(args.config)
    result = run_scenario(cfg)
    _write_bundle(_out_dir(args, cfg), result)
    sys.stdout.write(json_text(result.summary))
    return 1 if result.summary["verdict"] == "fail" else 0


def _sweep_one(cfg: ScenarioConfig) -> tuple[str, dict, dict]:
    # module-level so worker processes can unpickle it
    try:
        result = run_scenario(cfg)
    except KlabError as exc:
        summary = {"schema_version": SCHEMA_VERSION, "scenario": cfg.as_dict(),
                   "error": f"{type(exc).__name__}: {exc}", "verdict": "fail"}
        return cfg.name, summary, {}
    return cfg.name, result.summary, result.tables


def cmd_sweep(args) -> int:
    configs = parse_matrix(args.matrix)
    out = Path(args.out) if args.out is not None else Path(DEFAULT_OUT) / "sweep"
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, configs))
    else:
        results = [_sweep_one(cfg) for cfg in configs]
    results.sort(key=lambda item: item[0])
    merged = {"schema_version": SCHEMA_VERSION, "matrix": str(args.matrix), "scenarios": []}
    failed = []
    for name, summary, tables in results:
        target = out / _safe_name(name)
        for tname, table in tables.items():
            write_csv(target / f"{tname}.csv", table)
        write_json(target / "summary.json", summary)
        merged["scenarios"].append({"name": name, "verdict": summary["verdict"],
                                    "checks": summary.get("checks"), "error": summary.get("error")})
        if summary["verdict"] == "fail":
            failed.append(name)
        print(f"{summary['verdict']:>20}  {name}")
    merged["failed"] = failed
    write_json(out / "sweep.json", merged)
    return 1 if failed else 0


def _default_jobs() -> int:
    raw = os.environ.get("KLAB_JOBS", "1")
    try:
        return max(int(raw), 1)
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="klab", description="Energy-method lab for Schrodinger operators on "
                                 "warped-product manifolds.")
    sub = ap.add_subparsers(dest="command", metavar="{threshold,simulate,energy,verify,sweep}")
    sub.required = True

    th = sub.add_parser("threshold", help="evaluate a closed-form eigenvalue threshold")
    th.add_argument("--theorem", required=True, choices=sorted(THEOREMS))
    th.add_argument("--n", type=int, default=None, help="dimension (cor3, cor4, goodbound)")
    for name in CONSTANTS[1:]:
        th.add_argument(f"--{name}", type=float, default=None)
    th.add_argument("--json", action="store_true", help="print the full report as JSON")
    th.set_defaults(func=cmd_threshold)

    helps = {"simulate": "solve the radial modes and write mode and sphere-norm tables",
             "energy": "energy curve and derivative-identity check",
             "verify": "full scenario bundle with verdicts"}
    funcs = {"simulate": cmd_simulate, "energy": cmd_energy, "verify": cmd_verify}
    for name, func in funcs.items():
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("config", help="scenario TOML file or bundled scenario name")
        p.add_argument("--out", default=None, help="output directory")
        if name == "simulate":
            p.add_argument("--jobs", type=int, default=_default_jobs())
        p.set_defaults(func=func)

    sw = sub.add_parser("sweep", help="run a scenario matrix in parallel")
    sw.add_argument("matrix", help="matrix TOML file or bundled name (matrix)")
    sw.add_argument("--jobs", type=int, default=_default_jobs(), help="worker processes (default $KLAB_JOBS or 1)")
    sw.add_argument("--out", default=None, help="output directory")
    sw.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except KlabError as exc:
        # numerical failure while running a valid config
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
