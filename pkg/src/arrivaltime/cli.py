"""Command-line front end.

Subcommands: exact, simulate, lambda-scan, currents, verify. Every run writes
``manifest.toml`` with the fully resolved configuration, which can be fed
back through ``--config`` to repeat the run bit for bit.

Exit codes: 0 success, 1 validation error, 2 verification failure,
3 integrator-failure abort.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, config
from .ensemble import (
    IntegratorAbort,
    RunConfig,
    event_rows,
    exact_mean_arrival,
    run_ensemble,
    truncated_limit_mean,
)
from .fields import BohmLike, Bohmian, SpacePoint, current, density
from .verify import run_checks
from .wavepacket import q_exact, q_limit

log = logging.getLogger("arrivaltime")

EXIT_OK, EXIT_INVALID, EXIT_VERIFY, EXIT_ABORT = 0, 1, 2, 3
WORKERS_ENV = "ARRIVALTIME_WORKERS"
LAMBDA_NOTE = "lambda values are implementation-chosen; no numeric lambda is given by the underlying analysis"

CURVE_COLUMNS = ("t", "q_exact", "q_emp", "se_q", "p_emp", "se_p")


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def _finite_or_none(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite_or_none(v) for v in obj]
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_finite_or_none(data), indent=2, allow_nan=False) + "\n")


def write_curves(path: Path, curves) -> None:
    rows = zip(curves.t_grid, curves.q_exact, curves.q_emp, curves.se_q, curves.p_emp, curves.se_p)
    write_csv(path, CURVE_COLUMNS, rows)


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def _threshold(cfg):
    params = config.packet_params(cfg)
    if params.b == params.c:
        return None
    grid = analysis.GridSpec(
        n_plane=cfg["scan.plane_points"],
        n_times=cfg["scan.t_points"],
        t_max=None if cfg["scan.t_max"] == config.AUTO else cfg["scan.t_max"],
    )
    return analysis.lambda_critical(params, grid=grid), grid


def cmd_exact(cfg, out: Path) -> int:
    params = config.packet_params(cfg)
    settings = config.integrator_settings(cfg)
    t = np.linspace(0.0, settings.t_max, cfg["grid.n_points"])
    q = q_exact(params, t)
    write_csv(out / "exact.csv", ("t", "q_exact"), zip(t, q))
    write_json(out / "exact_summary.json", {
        "q0": float(q_exact(params, 0.0)),
        "q_limit": q_limit(params),
        "never_arrive_exact": 1 - q_limit(params),
        "t_max": settings.t_max,
        "t_bar_exact": exact_mean_arrival(params, settings.t_max),
        "t_bar_truncated_limit_form": truncated_limit_mean(params, settings.t_max),
        "t_bar_note": "t_bar_exact is conditioned on arrival by t_max; the unconditioned mean diverges logarithmically",
    })
    return EXIT_OK


def _summary(cfg, curves, kind, lambda_crit):
    gap = curves.p_emp - curves.q_emp
    return {
        "config": cfg,
        "version": __version__,
        "n": curves.n,
        "n_failed": curves.n_failed,
        "n_started_in_plus": curves.n_started_in_plus,
        "field_kind": kind.name,
        "lambda": kind.lam,
        "lambda_crit": lambda_crit,
        "lambda_note": LAMBDA_NOTE,
        "p_inf_emp": curves.p_inf_emp,
        "never_arrive_emp": curves.never_arrive_emp,
        "never_arrive_exact": curves.never_arrive_exact,
        "censoring_bound": curves.censoring_bound,
        "t_bar_emp": curves.t_bar_emp,
        "t_bar_se": curves.t_bar_se,
        "t_bar_exact": curves.t_bar_exact,
        "n_leaving_events": curves.n_leaving_events,
        "n_returning_trajectories": curves.n_returning,
        "max_p_minus_q_emp": float(np.max(gap)),
        "sup_abs_p_minus_q_exact": float(np.max(np.abs(curves.p_emp - curves.q_exact))),
    }


def _run(cfg, kind, n, workers, keep_events):
    rc = RunConfig(
        params=config.packet_params(cfg),
        kind=kind,
        n=n,
        seed=cfg["run.seed"],
        settings=config.integrator_settings(cfg),
        n_points=cfg["grid.n_points"],
    )
    return run_ensemble(rc, workers=workers, keep_records=keep_events)


def cmd_simulate(cfg, out: Path, workers: int) -> int:
    found = _threshold(cfg)
    lambda_crit = found[0].lambda_crit if found else None
    kind = config.field_kind(cfg, lambda_crit)
    curves = _run(cfg, kind, cfg["run.n"], workers, cfg["run.event_log"])
    write_curves(out / "curves.csv", curves)
    write_json(out / "summary.json", _summary(cfg, curves, kind, lambda_crit))
    if cfg["run.event_log"]:
        write_csv(out / "events.csv", ("trajectory_id", "t_cross", "y", "z", "direction"),
                  ((str(i), t, y, z, d) for i, t, y, z, d in event_rows(curves.records)))
    log.info("simulate: n=%d leaving=%d p_inf=%.6f", curves.n, curves.n_leaving_events, curves.p_inf_emp)
    return EXIT_OK


def cmd_lambda_scan(cfg, out: Path, workers: int) -> int:
    params = config.packet_params(cfg)
    if params.b == params.c:
        raise config.ConfigError("b == c: delta_v vanishes on the plane, no threshold exists")
    th, grid = _threshold(cfg)
    cert_times = np.append(np.linspace(0.0, th.t_grid[-1], 201), th.t_worst)
    below = analysis.scan_min_plane_vx(params, 0.999 * th.lambda_crit, cert_times, grid)
    above = analysis.scan_min_plane_vx(params, 1.001 * th.lambda_crit, cert_times, grid)
    write_csv(out / "lambda_ratio.csv", ("t", "vbx_plane", "max_abs_dvx_per_lambda", "ratio"),
              zip(th.t_grid, analysis.plane_bohmian_vx(params, th.t_grid),
                  analysis.max_abs_delta_vx_value(params, th.t_grid), th.ratio))
    multiples = []
    if cfg["scan.run_ensembles"]:
        for factor in cfg["scan.multiples"]:
            curves = _run(cfg, BohmLike(factor * th.lambda_crit), cfg["scan.n"], workers, False)
            multiples.append({
                "factor": factor,
                "lambda": factor * th.lambda_crit,
                "n": curves.n,
                "n_leaving_events": curves.n_leaving_events,
                "max_p_minus_q_emp": float(np.max(curves.p_emp - curves.q_emp)),
                "caveat": "leaving counts are statistical; zero at finite n is inconclusive above threshold",
            })
    write_json(out / "lambda_scan.json", {
        "lambda_crit": th.lambda_crit,
        "t_worst": th.t_worst,
        "bracket": list(th.bracket),
        "min_vblx_at_0.999": below,
        "min_vblx_at_1.001": above,
        "certified": bool(below > 0 and above < 0),
        "lambda_note": LAMBDA_NOTE,
        "multiples": multiples,
    })
    return EXIT_OK


def cmd_currents(cfg, out: Path) -> int:
    params = config.packet_params(cfg)
    found = _threshold(cfg)
    if found is None:
        lam = cfg["field.lambda"] or 1.0
    else:
        lam = cfg["field.lambda"] or cfg["currents.lambda_factor"] * found[0].lambda_crit
    axis = np.linspace(-cfg["currents.half_width"], cfg["currents.half_width"], cfg["currents.n_points"])
    Y, Z = np.meshgrid(axis, axis, indexing="ij")
    rows = []
    for t in cfg["currents.times"]:
        p = SpacePoint(np.zeros_like(Y), Y, Z, np.full_like(Y, t))
        jc = current(params, p, Bohmian()).vx
        jl = current(params, p, BohmLike(lam)).vx
        rho = density(params, p)
        rows += list(zip(np.full(Y.size, t), Y.ravel(), Z.ravel(), rho.ravel(), jc.ravel(), jl.ravel()))
    write_csv(out / "currents.csv", ("t", "y", "z", "density", "j_cx", "j_lx"), rows)
    write_json(out / "currents_summary.json", {"lambda": lam, "lambda_note": LAMBDA_NOTE})
    return EXIT_OK


def cmd_verify(cfg, out: Path, erfc=None) -> int:
    params = config.packet_params(cfg)
    kwargs = {} if erfc is None else {"erfc": erfc}
    results = run_checks(params, cfg["verify.n_points"], cfg["verify.seed"], **kwargs)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    write_json(out / "verify.json", {"passed": ok, "checks": [r.to_dict() for r in results]})
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arrivaltime", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("exact", "simulate", "lambda-scan", "currents", "verify"):
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", type=Path, help="config file with dotted keys")
        p.add_argument("-o", "--output-dir", type=Path, default=Path("out"))
        p.add_argument("-s", "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    try:
        cfg = config.load(args.config, overrides)
    except (config.ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    # results never depend on the worker count
    workers = args.workers or int(os.environ.get(WORKERS_ENV, 0)) or cfg["run.workers"]
    out = args.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.toml").write_text(config.dumps(cfg, args.command))
    try:
        if args.command == "exact":
            return cmd_exact(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, workers)
        if args.command == "lambda-scan":
            return cmd_lambda_scan(cfg, out, workers)
        if args.command == "currents":
            return cmd_currents(cfg, out)
        return cmd_verify(cfg, out)
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except IntegratorAbort as exc:
        print(f"integrator abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
