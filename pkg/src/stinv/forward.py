"""Crank-Nicolson time marching for the forward convection-diffusion problem
and synthetic observation generation.

Each step solves (B + tau/2 (A+E)) C^n = (B - tau/2 (A+E)) C^{n-1}
+ tau B fbar^n + tau <qbar^n, phi>_Gamma2 with Dirichlet rows replaced by
identity; the inner systems go through ILU(0)-preconditioned GMRES.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .blocksparse import BlockSparseMatrix
from .fem import SpatialOperators, assemble_spatial, gamma2_load, snap_to_nodes
from .ilu import block_ilu
from .krylov import KrylovConfig, gmres
from .mesh import GAMMA1, SpatialMesh, TimeGrid


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients and data of the model problem."""

    a: float | Callable = 1.0
    v: tuple[float, float, float] = (1.0, 1.0, 1.0)
    p: Callable | None = None   # Dirichlet data p(x, t) on Gamma1
    q: Callable | None = None   # Neumann data q(x, t) on Gamma2
    C0: Callable | None = None  # initial condition
    T: float = 1.0


def _nodal(func, nodes, t):
    if func is None:
        return np.zeros(nodes.shape[0])
    return np.asarray(func(nodes, t), dtype=float)


class ForwardSolveError(RuntimeError):
    pass


def solve_forward(mesh: SpatialMesh, grid: TimeGrid, spec: ProblemSpec,
                  f: Callable | None, ops: SpatialOperators | None = None,
                  rtol: float = 1e-10) -> np.ndarray:
    """March the state equation; returns nodal fields of shape (M+1, N)."""
    if ops is None:
        ops = assemble_spatial(mesh, spec.a, spec.v)
    tau = grid.tau
    N = mesh.num_nodes
    AE = ops.A + ops.E
    step_full = (ops.B + tau / 2.0 * AE).tocsr()
    prev_full = (ops.B - tau / 2.0 * AE).tocsr()

    dirichlet = mesh.boundary_tag == GAMMA1
    keep = sp.diags((~dirichlet).astype(float))
    step = (keep @ step_full + sp.diags(dirichlet.astype(float))).tocsr()

    factors = block_ilu(BlockSparseMatrix.from_csr(step, 1), 0)
    cfg = KrylovConfig(restart=50, rtol=rtol, max_iters=5000)

    series = np.zeros((grid.M + 1, N))
    series[0] = _nodal(spec.C0, mesh.nodes, 0.0)
    if spec.p is not None:
        series[0, dirichlet] = _nodal(spec.p, mesh.nodes, 0.0)[dirichlet]

    f_prev = _nodal(f, mesh.nodes, 0.0)
    q_prev = (gamma2_load(mesh, _nodal(spec.q, mesh.nodes, 0.0))
              if spec.q is not None else np.zeros(N))
    levels = grid.levels
    for n in range(1, grid.M + 1):
        t = levels[n]
        f_cur = _nodal(f, mesh.nodes, t)
        q_cur = (gamma2_load(mesh, _nodal(spec.q, mesh.nodes, t))
                 if spec.q is not None else np.zeros(N))
        rhs = (prev_full @ series[n - 1]
               + tau * (ops.B @ ((f_prev + f_cur) / 2.0))
               + tau * (q_prev + q_cur) / 2.0)
        rhs[dirichlet] = _nodal(spec.p, mesh.nodes, t)[dirichlet] \
            if spec.p is not None else 0.0
        x, rep = gmres(lambda u: step @ u, factors.solve, rhs, cfg,
                       x0=series[n - 1])
        if not rep.converged:
            raise ForwardSolveError(
                f"inner solve failed at step {n}: residual {rep.final_residual:.3e}")
        series[n] = x
        f_prev, q_prev = f_cur, q_cur
    return series


def state_step_matrices(mesh: SpatialMesh, grid: TimeGrid, ops: SpatialOperators):
    """The CN step pair (A1, A2): A1 C^n + A2 C^{n-1} = step right-hand side."""
    tau = grid.tau
    AE = ops.A + ops.E
    A1 = (ops.B + tau / 2.0 * AE).tocsr()
    A2 = (-ops.B + tau / 2.0 * AE).tocsr()
    return A1, A2


@dataclass
class ObservationSet:
    """Noisy measurements at mesh nodes.

    `averages[:, n-1]` holds the interval average over [t^{n-1}, t^n]
    (half the sum of the two endpoint values), which is what the adjoint
    right-hand side consumes; `level_values` keeps the pointwise-in-time
    samples for diagnostics.
    """

    node_indices: np.ndarray        # (s,)
    averages: np.ndarray            # (s, M)
    level_values: np.ndarray        # (s, M+1)
    noise_level: float
    seed: int

    def write_csv(self, path, mesh: SpatialMesh):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_id", "x", "y", "z", "n", "value"])
            for i, node in enumerate(self.node_indices):
                x, y, z = mesh.nodes[node]
                for n in range(self.averages.shape[1]):
                    w.writerow([node, x, y, z, n + 1,
                                repr(float(self.averages[i, n]))])

    @classmethod
    def read_csv(cls, path, noise_level=0.0, seed=0):
        rows = {}
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.setdefault(int(rec["node_id"]), {})[int(rec["n"])] = \
                    float(rec["value"])
        nodes = np.array(sorted(rows), dtype=np.int64)
        M = max(max(v) for v in rows.values())
        avg = np.array([[rows[j][n] for n in range(1, M + 1)] for j in nodes])
        return cls(node_indices=nodes, averages=avg,
                   level_values=np.full((len(nodes), M + 1), np.nan),
                   noise_level=noise_level, seed=seed)


def generate_observations(series: np.ndarray, nodes: np.ndarray,
                          noise_level: float, seed: int) -> ObservationSet:
    """Perturb pointwise-in-time samples with multiplicative Gaussian noise,
    then interval-average; deterministic for a fixed seed."""
    if noise_level < 0:
        raise ValueError("noise level must be nonnegative")
    vals = series[:, nodes].T.copy()  # (s, M+1)
    rng = np.random.default_rng(seed)
    if noise_level > 0:
        vals = vals + noise_level * rng.standard_normal(vals.shape) * vals
    avg = 0.5 * (vals[:, :-1] + vals[:, 1:])
    return ObservationSet(node_indices=np.asarray(nodes), averages=avg,
                          level_values=vals, noise_level=noise_level,
                          seed=seed)


def sample_observations(data_mesh: SpatialMesh, data_grid: TimeGrid,
                        series: np.ndarray, mesh: SpatialMesh, grid: TimeGrid,
                        measurement_points: np.ndarray,
                        noise_level: float, seed: int) -> ObservationSet:
    """Sample a (finer) data-generation run at measurement locations snapped
    to the inversion mesh, on the inversion time levels."""
    if data_grid.M % grid.M:
        raise ValueError("data time grid must refine the inversion grid")
    stride = data_grid.M // grid.M
    nodes = snap_to_nodes(mesh, measurement_points)
    coords = mesh.nodes[nodes]
    data_nodes = snap_to_nodes(data_mesh, coords)
    if len(data_nodes) != len(nodes):
        # distinct inversion nodes must stay distinct on the finer mesh
        raise ValueError("data mesh does not resolve the measurement nodes")
    sub = series[::stride]  # (M+1, N_data)
    obs = generate_observations(sub, data_nodes, noise_level, seed)
    return ObservationSet(node_indices=nodes, averages=obs.averages,
                          level_values=obs.level_values,
                          noise_level=noise_level, seed=seed)
