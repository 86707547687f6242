"""Experiment driver: configuration, the full inversion pipeline, and sweeps.

Pipeline: manufacture observation data with a forward run on a finer mesh,
snap the measurements onto the inversion mesh, assemble the coupled system,
build the one- or two-level space-time Schwarz preconditioner, solve with
GMRES or fGMRES, and compute reconstruction metrics.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .fem import RegularizationSpec, assemble_spatial, assemble_temporal, build_B3
from .forward import ObservationSet, ProblemSpec, sample_observations, solve_forward
from .kkt import KktSolution, assemble_kkt, evaluate_objective, extract_solution
from .krylov import KrylovConfig, fgmres, gmres
from .mesh import HALF_WIDTH, build_spatial_mesh, build_time_grid, decompose
from .schwarz import build_one_level, build_transfers, build_two_level
from .sources import SourceSpec, make_source


@dataclass
class RunConfig:
    source: str = "gaussian_pair"
    fine_cells: int = 16
    fine_M: int = 16
    coarse_cells: int = 8
    coarse_M: int = 8
    parts: tuple[int, int, int] = (2, 2, 2)
    Nt: int = 2
    overlap: int = 1
    coarse_overlap: int = 1
    ilu_k: int = 0
    levels: int = 1
    restart: int = 50
    rtol: float = 1e-6
    max_iters: int = 3000
    coarse_rtol: float = 1e-1
    coarse_max_iters: int = 4
    beta1: float = 3.6e-5
    beta2: float = 3.6e-3
    reg_kind: str = "H1H1"
    meas_grid: int = 7
    eps: float = 0.01
    seed: int = 1234
    data_refine: int = 2
    exact_local: bool = False
    restriction: str = "injection"
    workers: int = 1
    T: float = 1.0
    output_dir: str = "."
    snapshots: tuple[int, ...] = ()

    def krylov_config(self) -> KrylovConfig:
        restart = self.restart
        if self.levels == 2 and restart == 50:
            restart = 30  # fGMRES default restart
        return KrylovConfig(restart=restart, rtol=self.rtol,
                            max_iters=self.max_iters,
                            flexible=self.levels == 2)

    def source_spec(self) -> SourceSpec:
        return make_source(self.source)


_BOOL_FIELDS = {"exact_local"}
_TUPLE_FIELDS = {"parts", "snapshots"}


def parse_config_file(path) -> dict:
    """Flat key=value config; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"malformed config line: {raw.strip()!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key] = val
    return out


def config_from_mapping(values: dict, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    valid = {f.name: f.type for f in fields(RunConfig)}
    updates = {}
    for key, val in values.items():
        if key not in valid:
            raise ValueError(f"unknown config key {key!r}")
        current = getattr(cfg, key)
        if key in _TUPLE_FIELDS:
            if isinstance(val, str):
                val = tuple(int(s) for s in val.replace(",", " ").split())
            updates[key] = tuple(val)
        elif key in _BOOL_FIELDS:
            if isinstance(val, str):
                val = val.lower() in ("1", "true", "yes", "on")
            updates[key] = bool(val)
        elif isinstance(current, int) and not isinstance(current, bool):
            updates[key] = int(val)
        elif isinstance(current, float):
            updates[key] = float(val)
        else:
            updates[key] = val
    return replace(cfg, **updates)


def measurement_grid(s: int) -> np.ndarray:
    """Uniform s^3 lattice spanning the closed cube."""
    axis = np.linspace(-HALF_WIDTH, HALF_WIDTH, s)
    zz, yy, xx = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])


@dataclass
class ReconstructionReport:
    iterations: int
    converged: bool
    residuals: list[float]
    stage_seconds: dict[str, float]
    rel_error: float
    snapshot_errors: dict[int, float]
    objective: float
    config: RunConfig

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["key", "value"])
            w.writerow(["iterations", self.iterations])
            w.writerow(["converged", int(self.converged)])
            w.writerow(["final_residual",
                        self.residuals[-1] if self.residuals else ""])
            w.writerow(["rel_error", f"{self.rel_error:.6e}"])
            w.writerow(["objective", f"{self.objective:.6e}"])
            for k, v in self.stage_seconds.items():
                w.writerow([f"time_{k}", f"{v:.3f}"])
            for n, e in self.snapshot_errors.items():
                w.writerow([f"snapshot_error_{n}", f"{e:.6e}"])


def nodal_source_series(source: SourceSpec, mesh, grid) -> np.ndarray:
    return np.array([source(mesh.nodes, t) for t in grid.levels])


def spacetime_l2_error(f_num: np.ndarray, f_ref: np.ndarray, B, Mt) -> float:
    """Relative error in the discrete space-time L2 norm (Mt x B form)."""
    def norm2(g):
        return float(np.sum(Mt * (g @ (B @ g.T))))
    e = f_num - f_ref
    denom = norm2(f_ref)
    if denom == 0.0:
        return float(np.sqrt(norm2(e)))
    return float(np.sqrt(norm2(e) / denom))


def generate_data(cfg: RunConfig, source: SourceSpec | None = None):
    """Forward run on the (finer) data-generation mesh; returns
    (data_mesh, data_grid, series)."""
    source = source or cfg.source_spec()
    data_mesh = build_spatial_mesh(cfg.fine_cells * cfg.data_refine)
    data_grid = build_time_grid(cfg.fine_M * cfg.data_refine, cfg.T)
    spec = ProblemSpec(T=cfg.T)
    series = solve_forward(data_mesh, data_grid, spec, source)
    return data_mesh, data_grid, series


class SolverDidNotConverge(RuntimeError):
    def __init__(self, report):
        super().__init__("Krylov solver did not converge")
        self.report = report


def run_inversion(cfg: RunConfig, data=None, raise_on_failure: bool = False):
    """Full inversion; returns (ReconstructionReport, KktSolution, context).

    `data` may carry a precomputed (data_mesh, data_grid, series) triple so
    sweeps can share one forward run.
    """
    timings: dict[str, float] = {}
    source = cfg.source_spec()
    spec = ProblemSpec(T=cfg.T)

    t0 = time.perf_counter()
    if data is None:
        data = generate_data(cfg, source)
    data_mesh, data_grid, series = data
    timings["data_generation"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    mesh = build_spatial_mesh(cfg.fine_cells)
    grid = build_time_grid(cfg.fine_M, cfg.T)
    points = measurement_grid(cfg.meas_grid)
    obs = sample_observations(data_mesh, data_grid, series, mesh, grid,
                              points, cfg.eps, cfg.seed)
    timings["observations"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ops = assemble_spatial(mesh, 1.0, (1.0, 1.0, 1.0),
                           measurement_points=points)
    temporal = assemble_temporal(grid)
    reg = RegularizationSpec(beta1=cfg.beta1, beta2=cfg.beta2,
                             kind=cfg.reg_kind)
    system = assemble_kkt(mesh, grid, ops, temporal, reg, obs, spec)
    timings["assembly"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    decomp = decompose(mesh, grid, cfg.parts, cfg.Nt, cfg.overlap)
    fine_pre = build_one_level(system.F, decomp, ilu_k=cfg.ilu_k,
                               exact_local=cfg.exact_local,
                               workers=cfg.workers)
    if cfg.levels == 2:
        cmesh = build_spatial_mesh(cfg.coarse_cells)
        cgrid = build_time_grid(cfg.coarse_M, cfg.T)
        cops = assemble_spatial(cmesh, 1.0, (1.0, 1.0, 1.0),
                                measurement_points=points)
        ctemporal = assemble_temporal(cgrid)
        cobs = ObservationSet(
            node_indices=cops.measurement_nodes,
            averages=np.zeros((len(cops.measurement_nodes), cgrid.M)),
            level_values=np.zeros((len(cops.measurement_nodes), cgrid.M + 1)),
            noise_level=0.0, seed=cfg.seed)
        csystem = assemble_kkt(cmesh, cgrid, cops, ctemporal, reg, cobs, spec)
        cdecomp = decompose(cmesh, cgrid, cfg.parts, cfg.Nt,
                            cfg.coarse_overlap)
        coarse_pre = build_one_level(csystem.F, cdecomp, ilu_k=cfg.ilu_k,
                                     workers=cfg.workers)
        transfers = build_transfers(mesh, grid, cmesh, cgrid,
                                    restriction=cfg.restriction)
        coarse_cfg = KrylovConfig(restart=max(cfg.coarse_max_iters, 1),
                                  rtol=cfg.coarse_rtol,
                                  max_iters=cfg.coarse_max_iters)
        precond = build_two_level(system.F, csystem.F, transfers, fine_pre,
                                  coarse_pre, coarse_cfg)
    else:
        precond = fine_pre
    timings["preconditioner"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    kcfg = cfg.krylov_config()
    solver = fgmres if kcfg.flexible else gmres
    U, solve_report = solver(lambda u: system.F @ u, precond.apply,
                             system.b, kcfg)
    timings["solve"] = time.perf_counter() - t0

    sol = extract_solution(system, U)
    f_true = nodal_source_series(source, mesh, grid)
    rel_err = spacetime_l2_error(sol.f, f_true, ops.B, temporal.Mt)
    snap_errors = {}
    for n in cfg.snapshots:
        ref = f_true[n]
        num = sol.f[n]
        denom = float(ref @ (ops.B @ ref))
        err2 = float((num - ref) @ (ops.B @ (num - ref)))
        snap_errors[n] = float(np.sqrt(err2 / denom)) if denom else np.sqrt(err2)
    objective = evaluate_objective(sol.C, sol.f, obs, reg, ops, temporal)

    report = ReconstructionReport(
        iterations=solve_report.iterations, converged=solve_report.converged,
        residuals=solve_report.residuals, stage_seconds=timings,
        rel_error=rel_err, snapshot_errors=snap_errors,
        objective=objective, config=cfg)
    context = {"mesh": mesh, "grid": grid, "system": system, "obs": obs,
               "ops": ops, "temporal": temporal, "f_true": f_true,
               "solve_report": solve_report}
    if raise_on_failure and not solve_report.converged:
        raise SolverDidNotConverge(report)
    return report, sol, context


SWEEP_AXES = ("ilu_k", "overlap", "levels", "subdomains", "eps", "reg_kind")


def _apply_axis(cfg: RunConfig, axis: str, value) -> RunConfig:
    if axis == "subdomains":
        # value = (px, py, pz, Nt)
        px, py, pz, nt = value
        return replace(cfg, parts=(px, py, pz), Nt=nt)
    if axis == "reg_kind":
        return replace(cfg, reg_kind=str(value))
    if axis == "eps":
        return replace(cfg, eps=float(value))
    return replace(cfg, **{axis: int(value)})


def sweep(cfg: RunConfig, axis: str, values, csv_path=None, data=None):
    """Run the pipeline once per axis value; failures are recorded per row."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}")
    if data is None:
        data = generate_data(cfg)  # noise is applied at sampling time
    rows = []
    for value in values:
        run_cfg = _apply_axis(cfg, axis, value)
        try:
            report, _, _ = run_inversion(run_cfg, data=data)
            rows.append({
                "value": value, "iterations": report.iterations,
                "converged": int(report.converged),
                "time": sum(report.stage_seconds.values()),
                "rel_error": report.rel_error, "error": ""})
        except Exception as exc:  # keep sweeping
            rows.append({"value": value, "iterations": "", "converged": 0,
                         "time": "", "rel_error": "", "error": str(exc)})
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["value", "iterations",
                                               "converged", "time",
                                               "rel_error", "error"])
            w.writeheader()
            w.writerows(rows)
    return rows
