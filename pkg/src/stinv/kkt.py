"""Assembly of the coupled space-time optimality system F_h U = b.

The system couples concentration C, adjoint G and source f at every
(node, time level) pair.  Unknowns are ordered point-block wise: global index
3*(n*N + j) + var with var in {C=0, G=1, f=2}, so the time-block structure is
tridiagonal and every 3x3 diagonal block is structurally nonzero.

Internally the matrix is accumulated variable-major (the layout with the
C / G / f column groups) from Kronecker products of temporal stencils with
the spatial operators, then re-indexed to the point-block ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .blocksparse import BlockSparseMatrix
from .fem import (RegularizationSpec, SpatialOperators, TemporalOperators,
                  gamma2_load)
from .forward import ObservationSet, ProblemSpec, _nodal
from .mesh import GAMMA1, SpatialMesh, TimeGrid

VAR_C, VAR_G, VAR_F = 0, 1, 2


@dataclass
class KktSystem:
    F: sp.csr_matrix            # point-block ordered scalar matrix
    b: np.ndarray
    mesh: SpatialMesh
    grid: TimeGrid
    ops: SpatialOperators
    temporal: TemporalOperators
    reg: RegularizationSpec
    _block: BlockSparseMatrix | None = None

    @property
    def N(self) -> int:
        return self.mesh.num_nodes

    @property
    def M(self) -> int:
        return self.grid.M

    @property
    def num_dofs(self) -> int:
        return 3 * self.N * (self.M + 1)

    def block_matrix(self) -> BlockSparseMatrix:
        if self._block is None:
            self._block = BlockSparseMatrix.from_csr(self.F, 3)
        return self._block

    def dof_index(self, node, level, var):
        return 3 * (level * self.N + node) + var

    def dump(self, matrix_path, rhs_path):
        """Coordinate-triplet text dump for cross-checking."""
        coo = self.F.tocoo()
        with open(matrix_path, "w") as fh:
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {float(v)!r}\n")
        with open(rhs_path, "w") as fh:
            for v in self.b:
                fh.write(f"{float(v)!r}\n")


@dataclass
class KktSolution:
    C: np.ndarray  # (M+1, N)
    G: np.ndarray
    f: np.ndarray


def point_block_permutation(N: int, M: int) -> np.ndarray:
    """perm_inv[vm] = point index; variable-major index is
    var*(N*(M+1)) + n*N + j."""
    Mp = M + 1
    vm = np.arange(3 * N * Mp)
    var = vm // (N * Mp)
    rem = vm % (N * Mp)
    n = rem // N
    j = rem % N
    return 3 * (n * N + j) + var


def combined_blocks(ops: SpatialOperators, tau: float):
    """The step blocks A1, A2 (state) and B1, B2 (adjoint)."""
    AE = ops.A + ops.E
    AEt = ops.A + ops.E.T
    A1 = (ops.B + tau / 2.0 * AE).tocsr()
    A2 = (-ops.B + tau / 2.0 * AE).tocsr()
    B1 = (ops.B + tau / 2.0 * AEt).tocsr()
    B2 = (-ops.B + tau / 2.0 * AEt).tocsr()
    return A1, A2, B1, B2


def regularization_blocks(ops: SpatialOperators, temporal: TemporalOperators,
                          reg: RegularizationSpec):
    """Spatial factors of the W tensorization: W^{mn} = beta1 Lt[m,n] B +
    beta2 Mt[m,n] X with X the unit stiffness (H1H1) or the mass (H1L2)."""
    spatial = ops.A_unit if reg.kind == "H1H1" else ops.B
    return reg.beta1 * ops.B, reg.beta2 * spatial


def assemble_kkt(mesh: SpatialMesh, grid: TimeGrid, ops: SpatialOperators,
                 temporal: TemporalOperators, reg: RegularizationSpec,
                 obs: ObservationSet, spec: ProblemSpec) -> KktSystem:
    """Assemble the point-block KKT matrix and right-hand side."""
    N = mesh.num_nodes
    M = grid.M
    Mp = M + 1
    tau = grid.tau
    if reg.beta1 == 0 and reg.beta2 == 0:
        raise ValueError("both regularization weights zero: singular f block")
    if obs.averages.shape != (len(obs.node_indices), M):
        raise ValueError("observation set inconsistent with the time grid")

    A1, A2, B1, B2 = combined_blocks(ops, tau)
    Wt, Wx = regularization_blocks(ops, temporal, reg)

    # temporal stencils (Mp x Mp)
    rows = np.arange(1, Mp)
    Ldiag = sp.coo_matrix((np.ones(M), (rows, rows)), shape=(Mp, Mp))
    Lsub = sp.coo_matrix((np.ones(M), (rows, rows - 1)), shape=(Mp, Mp))
    rows0 = np.arange(M)
    Udiag = sp.coo_matrix((np.ones(M), (rows0, rows0)), shape=(Mp, Mp))
    Usup = sp.coo_matrix((np.ones(M), (rows0, rows0 + 1)), shape=(Mp, Mp))
    Mt = sp.csr_matrix(temporal.Mt)
    Lt = sp.csr_matrix(temporal.Lt)

    halfB = tau / 2.0 * ops.B
    halfB3 = tau / 2.0 * ops.B3
    blocks = [
        [sp.kron(Ldiag, A1) + sp.kron(Lsub, A2), None,
         sp.kron(Ldiag + Lsub, -halfB)],
        [sp.kron(Udiag + Usup, halfB3),
         sp.kron(Udiag, B1) + sp.kron(Usup, B2), None],
        [None, sp.kron(Mt, -ops.B), sp.kron(Lt, Wt) + sp.kron(Mt, Wx)],
    ]
    F_vm = sp.bmat(blocks, format="coo")

    # right-hand side, variable-major
    b_vm = np.zeros(3 * N * Mp)
    levels = grid.levels
    if spec.q is not None:
        q_loads = np.array([gamma2_load(mesh, _nodal(spec.q, mesh.nodes, t))
                            for t in levels])
        for n in range(1, Mp):
            b_vm[n * N:(n + 1) * N] = tau / 2.0 * (q_loads[n - 1] + q_loads[n])
    obs_nodes = obs.node_indices
    for n in range(1, Mp):
        row = np.zeros(N)
        row[obs_nodes] = tau * obs.averages[:, n - 1]
        b_vm[N * Mp + (n - 1) * N: N * Mp + n * N] = row

    # re-index to point-block ordering
    perm = point_block_permutation(N, M)
    F = sp.coo_matrix((F_vm.data, (perm[F_vm.row], perm[F_vm.col])),
                      shape=F_vm.shape).tocsr()
    b = np.zeros_like(b_vm)
    b[perm] = b_vm

    # identity-row replacement: Gamma1 rows of C and G, the C^0 rows, the
    # G^M rows
    g1 = mesh.boundary_tag == GAMMA1
    replace = np.zeros(3 * N * Mp, dtype=bool)
    idx3 = np.arange(N * Mp) * 3
    node_of = np.tile(np.arange(N), Mp)
    level_of = np.repeat(np.arange(Mp), N)
    replace[idx3 + VAR_C] = g1[node_of] | (level_of == 0)
    replace[idx3 + VAR_G] = g1[node_of] | (level_of == M)
    keep = sp.diags((~replace).astype(float))
    F = (keep @ F + sp.diags(replace.astype(float))).tocsr()

    bd = np.zeros(3 * N * Mp)
    C0 = _nodal(spec.C0, mesh.nodes, 0.0)
    bd[idx3 + VAR_C] = np.where(
        level_of == 0, C0[node_of],
        _dirichlet_values(spec, mesh, levels, node_of, level_of))
    b[replace] = bd[replace]
    F.sort_indices()
    return KktSystem(F=F, b=b, mesh=mesh, grid=grid, ops=ops,
                     temporal=temporal, reg=reg)


def _dirichlet_values(spec, mesh, levels, node_of, level_of):
    if spec.p is None:
        return np.zeros(node_of.shape[0])
    vals = np.array([_nodal(spec.p, mesh.nodes, t) for t in levels])
    return vals[level_of, node_of]


def extract_solution(system: KktSystem, U: np.ndarray) -> KktSolution:
    """De-interleave the point-block solution vector into nodal series."""
    if U.shape[0] != system.num_dofs:
        raise ValueError("solution vector size mismatch")
    arr = U.reshape(system.M + 1, system.N, 3)
    return KktSolution(C=arr[:, :, VAR_C].copy(), G=arr[:, :, VAR_G].copy(),
                       f=arr[:, :, VAR_F].copy())


def interleave_solution(system: KktSystem, sol: KktSolution) -> np.ndarray:
    arr = np.stack([sol.C, sol.G, sol.f], axis=-1)
    return arr.reshape(-1)


def evaluate_objective(C: np.ndarray, f: np.ndarray, obs: ObservationSet,
                       reg: RegularizationSpec, ops: SpatialOperators,
                       temporal: TemporalOperators) -> float:
    """Discrete objective: trapezoidal-in-time nodal misfit at the
    measurement nodes plus the regularization quadratic forms."""
    tau = temporal.tau
    diff = C[:, obs.node_indices] - obs.level_values.T  # (M+1, s)
    sq = (diff ** 2).sum(axis=1)
    misfit = 0.5 * np.trapezoid(sq, dx=tau)
    Wt, Wx = regularization_blocks(ops, temporal, reg)
    Bf = (Wt @ f.T)  # (N, M+1)
    temp_term = 0.5 * float(np.sum(temporal.Lt * (f @ Bf)))
    Xf = (Wx @ f.T)
    spat_term = 0.5 * float(np.sum(temporal.Mt * (f @ Xf)))
    return misfit + temp_term + spat_term
