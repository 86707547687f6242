"""Output artifacts: legacy VTK fields, slice CSVs, and matplotlib figures."""

from __future__ import annotations

import csv
import os

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .mesh import SpatialMesh, TimeGrid  # noqa: E402


def write_vtk(mesh: SpatialMesh, scalars: dict[str, np.ndarray], path):
    """Legacy ASCII unstructured-grid VTK file with nodal scalar fields."""
    try:
        with open(path, "w") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write("stinv nodal fields\n")
            fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
            fh.write(f"POINTS {mesh.num_nodes} double\n")
            for x, y, z in mesh.nodes:
                fh.write(f"{x:.10g} {y:.10g} {z:.10g}\n")
            nt = mesh.num_tets
            fh.write(f"CELLS {nt} {5 * nt}\n")
            for tet in mesh.tets:
                fh.write("4 " + " ".join(str(v) for v in tet) + "\n")
            fh.write(f"CELL_TYPES {nt}\n")
            fh.write("\n".join(["10"] * nt) + "\n")
            fh.write(f"POINT_DATA {mesh.num_nodes}\n")
            for name, values in scalars.items():
                if values.shape[0] != mesh.num_nodes:
                    raise ValueError(f"field {name!r} has wrong length")
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.write("\n".join(f"{v:.7e}" for v in values) + "\n")
    except OSError as exc:
        raise OSError(f"VTK export to {path} failed: {exc}") from exc


def read_vtk_scalars(path) -> dict[str, np.ndarray]:
    """Re-parse the scalar arrays of a file written by `write_vtk`."""
    fields = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = 0
    npts = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("POINT_DATA"):
            npts = int(line.split()[1])
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            vals = [float(v) for v in lines[i + 2:i + 2 + npts]]
            fields[name] = np.array(vals)
            i += 1 + npts
        i += 1
    return fields


def export_vtk(fields: dict[str, np.ndarray], mesh: SpatialMesh,
               grid: TimeGrid, out_dir, snapshots, slice_axis: int = 2,
               slice_value: float = 0.0):
    """One VTK file per field per snapshot plus a CSV of the source along a
    slice plane; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for n in snapshots:
        if not 0 <= n <= grid.M:
            raise ValueError(f"snapshot {n} outside 0..{grid.M}")
        for name, series in fields.items():
            path = os.path.join(out_dir, f"{name}_n{n:03d}.vtk")
            write_vtk(mesh, {name: series[n]}, path)
            paths.append(path)
    if "f" in fields:
        path = os.path.join(out_dir, "f_slice.csv")
        idx = np.abs(mesh.nodes[:, slice_axis] - slice_value) < mesh.h / 2
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "x", "y", "z", "f"])
            for n in snapshots:
                for j in np.nonzero(idx)[0]:
                    x, y, z = mesh.nodes[j]
                    w.writerow([n, x, y, z, repr(float(fields["f"][n][j]))])
        paths.append(path)
    return paths


def _slice_image(mesh: SpatialMesh, values: np.ndarray, z_index: int):
    m = mesh.n + 1
    return values.reshape(m, m, m)[z_index]  # (iy, ix)


def plot_residual_history(residuals, path, title="Krylov convergence"):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(residuals, "-o", ms=2.5)
    ax.set_xlabel("iteration")
    ax.set_ylabel("residual norm")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_source_slices(mesh: SpatialMesh, grid: TimeGrid,
                       f_num: np.ndarray, f_ref: np.ndarray | None,
                       snapshots, path, z_value: float = 0.0):
    """Reconstructed (and reference) source on the z = const plane at the
    selected time levels."""
    z_index = int(round((z_value + 2.0) / mesh.h))
    ncols = len(snapshots)
    nrows = 2 if f_ref is not None else 1
    fig, axes = plt.subplots(nrows, ncols,
                             figsize=(3.1 * ncols, 2.8 * nrows),
                             squeeze=False)
    extent = (-2, 2, -2, 2)
    rows = [(f_num, "reconstructed")]
    if f_ref is not None:
        rows = [(f_ref, "exact")] + rows
    vmax = max(float(np.abs(r[0][list(snapshots)]).max()) for r in rows) or 1.0
    for r, (series, label) in enumerate(rows):
        for c, n in enumerate(snapshots):
            img = _slice_image(mesh, series[n], z_index)
            ax = axes[r][c]
            im = ax.imshow(img, origin="lower", extent=extent,
                           vmin=-0.05 * vmax, vmax=vmax, cmap="viridis")
            ax.set_title(f"{label}, t={grid.levels[n]:.3f}", fontsize=9)
            ax.set_xticks([])
            ax.set_yticks([])
    fig.colorbar(im, ax=[a for row in axes for a in row], shrink=0.85)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report_figures(report, sol, context, out_dir):
    """Figure files written alongside the CSV report."""
    os.makedirs(out_dir, exist_ok=True)
    mesh, grid = context["mesh"], context["grid"]
    cfg = report.config
    snapshots = cfg.snapshots or (grid.M // 4, grid.M // 2, 3 * grid.M // 4)
    paths = [plot_residual_history(
        report.residuals, os.path.join(out_dir, "residual_history.png"))]
    paths.append(plot_source_slices(
        mesh, grid, sol.f, context.get("f_true"), snapshots,
        os.path.join(out_dir, "source_slices.png")))
    return paths
