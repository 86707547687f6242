"""Command line driver.

Subcommands:
  forward   generate synthetic observations and store them as CSV
  invert    run the full inversion and write report CSV, figures and VTK
  sweep     repeat the inversion along one parameter axis, one CSV row each
  export    re-run an inversion and dump VTK snapshots of C, G, f

Exit codes: 0 success, 1 configuration error, 2 solver non-convergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields

import numpy as np

from .driver import (RunConfig, config_from_mapping, generate_data,
                     measurement_grid, parse_config_file, run_inversion, sweep)
from .forward import sample_observations
from .mesh import build_spatial_mesh, build_time_grid
from .reporting import export_vtk, render_report_figures


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key=value config file")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest=f.name, default=None,
                            help=f"override config key {f.name}")


def _build_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = config_from_mapping(parse_config_file(args.config), cfg)
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)
                 if getattr(args, f.name, None) is not None}
    return config_from_mapping(overrides, cfg)


def _cmd_forward(args) -> int:
    cfg = _build_config(args)
    data_mesh, data_grid, series = generate_data(cfg)
    mesh = build_spatial_mesh(cfg.fine_cells)
    grid = build_time_grid(cfg.fine_M, cfg.T)
    obs = sample_observations(data_mesh, data_grid, series, mesh, grid,
                              measurement_grid(cfg.meas_grid), cfg.eps,
                              cfg.seed)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "observations.csv")
    obs.write_csv(path, mesh)
    print(f"wrote {len(obs.node_indices)} observation tracks to {path}")
    return 0


def _cmd_invert(args) -> int:
    cfg = _build_config(args)
    report, sol, context = run_inversion(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    report.write_csv(os.path.join(cfg.output_dir, "report.csv"))
    context["solve_report"].write_csv(
        os.path.join(cfg.output_dir, "residuals.csv"))
    figures = render_report_figures(report, sol, context, cfg.output_dir)
    print(f"iterations={report.iterations} converged={report.converged} "
          f"rel_error={report.rel_error:.4f}")
    for p in figures:
        print(f"figure: {p}")
    return 0 if report.converged else 2


def _cmd_sweep(args) -> int:
    cfg = _build_config(args)
    values = []
    for tok in args.values:
        if args.axis == "subdomains":
            values.append(tuple(int(s) for s in tok.split(",")))
        elif args.axis == "reg_kind":
            values.append(tok)
        elif args.axis == "eps":
            values.append(float(tok))
        else:
            values.append(int(tok))
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, f"sweep_{args.axis}.csv")
    rows = sweep(cfg, args.axis, values, csv_path=path)
    for row in rows:
        print(row)
    print(f"wrote {path}")
    return 0 if all(r["converged"] for r in rows) else 2


def _cmd_export(args) -> int:
    cfg = _build_config(args)
    report, sol, context = run_inversion(cfg)
    snapshots = cfg.snapshots or tuple(
        sorted({cfg.fine_M // 4, cfg.fine_M // 2, 3 * cfg.fine_M // 4}))
    paths = export_vtk({"C": sol.C, "G": sol.G, "f": sol.f},
                       context["mesh"], context["grid"], cfg.output_dir,
                       snapshots)
    for p in paths:
        print(p)
    return 0 if report.converged else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stinv",
        description="Space-time coupled inverse source reconstruction")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("forward", _cmd_forward), ("invert", _cmd_invert),
                     ("sweep", _cmd_sweep), ("export", _cmd_export)):
        p = subs.add_parser(name)
        _add_config_flags(p)
        p.set_defaults(func=fn)
        if name == "sweep":
            p.add_argument("--axis", required=True,
                           choices=("ilu_k", "overlap", "levels",
                                    "subdomains", "eps", "reg_kind"))
            p.add_argument("--values", nargs="+", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
