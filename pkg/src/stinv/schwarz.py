"""One- and two-level space-time restricted Schwarz preconditioners.

A one-level application gathers the residual on the owned degrees of freedom
of every subdomain, solves the local problem on the extended (overlapping)
set with all outside couplings dropped, and writes back only the owned part,
so every degree of freedom is written by exactly one subdomain and the
result is independent of the subdomain execution order.

The two-level variant composes a coarse-grid correction multiplicatively with
the fine one-level sweep:
    y   = P * coarse_solve(R * x)
    out = y + M_one(x - F_h * y)
where the coarse solve is an inner GMRES (loose tolerance, few iterations)
preconditioned by the coarse one-level Schwarz operator, so the overall
preconditioner varies between iterations and must be driven by fGMRES.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .blocksparse import BlockSparseMatrix
from .ilu import BlockIluFactors, SingularBlockError, block_ilu
from .krylov import KrylovConfig, gmres
from .mesh import SpaceTimeDecomposition, SpatialMesh, Subdomain, TimeGrid

BLOCK = 3  # unknowns per (node, level) pair


def _scalar_indices(block_ids: np.ndarray) -> np.ndarray:
    return (BLOCK * block_ids[:, None] + np.arange(BLOCK)).ravel()


@dataclass
class SubdomainSolver:
    """Local solver on one extended space-time subdomain."""

    ext_scalar: np.ndarray        # global scalar dofs of the extended set
    owned_global: np.ndarray      # global scalar dofs of the owned set
    owned_local: np.ndarray       # positions of the owned dofs inside ext
    factors: object               # BlockIluFactors or SuperLU

    def solve(self, rhs_local: np.ndarray) -> np.ndarray:
        if isinstance(self.factors, BlockIluFactors):
            return self.factors.solve(rhs_local)
        return self.factors.solve(rhs_local)


def _build_subdomain(F: sp.csr_matrix, N: int, sub: Subdomain,
                     ilu_k: int, exact_local: bool, sub_id: int) -> SubdomainSolver:
    n0, n1 = sub.ext_steps
    levels = np.arange(n0, n1 + 1)
    ext_blocks = (levels[:, None] * N + sub.ext_nodes[None, :]).ravel()
    o0, o1 = sub.owned_steps
    olevels = np.arange(o0, o1 + 1)
    own_blocks = (olevels[:, None] * N + sub.owned_nodes[None, :]).ravel()

    ext_scalar = _scalar_indices(ext_blocks)
    owned_global = _scalar_indices(own_blocks)
    pos = np.searchsorted(ext_blocks, own_blocks)
    owned_local = _scalar_indices(
        pos.astype(np.int64))  # local block position -> local scalar
    local = F[ext_scalar, :][:, ext_scalar].tocsr()
    if exact_local:
        factors = spla.splu(local.tocsc())
    else:
        try:
            factors = block_ilu(BlockSparseMatrix.from_csr(local, BLOCK), ilu_k)
        except SingularBlockError as exc:
            raise SingularBlockError(exc.row) from RuntimeError(
                f"subdomain {sub_id}: {exc}")
    return SubdomainSolver(ext_scalar=ext_scalar, owned_global=owned_global,
                           owned_local=owned_local, factors=factors)


@dataclass
class OneLevelPreconditioner:
    """Restricted space-time Schwarz preconditioner."""

    solvers: list[SubdomainSolver]
    num_dofs: int
    workers: int = 1

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = np.zeros_like(x)

        def run(solver: SubdomainSolver):
            rhs = np.zeros(len(solver.ext_scalar))
            rhs[solver.owned_local] = x[solver.owned_global]
            sol = solver.solve(rhs)
            y[solver.owned_global] = sol[solver.owned_local]

        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                list(pool.map(run, self.solvers))
        else:
            for s in self.solvers:
                run(s)
        return y

    __call__ = apply


def build_one_level(F: sp.csr_matrix, decomposition: SpaceTimeDecomposition,
                    ilu_k: int = 0, exact_local: bool = False,
                    workers: int = 1) -> OneLevelPreconditioner:
    """Factor the per-subdomain principal submatrices of F."""
    N = decomposition.mesh.num_nodes
    expected = BLOCK * N * (decomposition.grid.M + 1)
    if F.shape[0] != expected:
        raise ValueError("decomposition does not match the operator size")
    solvers = [_build_subdomain(F, N, sub, ilu_k, exact_local, i)
               for i, sub in enumerate(decomposition.subdomains)]
    return OneLevelPreconditioner(solvers=solvers, num_dofs=F.shape[0],
                                  workers=workers)


def apply_one_level(precond: OneLevelPreconditioner, x: np.ndarray) -> np.ndarray:
    return precond.apply(x)


def _interp_1d(fine_pts: int, ratio: int) -> sp.csr_matrix:
    """Linear interpolation from coarse to fine points on a nested 1D grid."""
    coarse_pts = (fine_pts - 1) // ratio + 1
    rows, cols, vals = [], [], []
    for i in range(fine_pts):
        lo, rem = divmod(i, ratio)
        if rem == 0:
            rows.append(i); cols.append(lo); vals.append(1.0)
        else:
            w = rem / ratio
            rows.append(i); cols.append(lo); vals.append(1.0 - w)
            rows.append(i); cols.append(lo + 1); vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(fine_pts, coarse_pts))


def _select_1d(fine_pts: int, ratio: int) -> sp.csr_matrix:
    coarse_pts = (fine_pts - 1) // ratio + 1
    rows = np.arange(coarse_pts)
    cols = rows * ratio
    return sp.csr_matrix((np.ones(coarse_pts), (rows, cols)),
                         shape=(coarse_pts, fine_pts))


@dataclass
class TransferOperators:
    """Nested-pair grid transfer: multilinear prolongation and either
    injection (default) or transposed-prolongation restriction."""

    prolong: sp.csr_matrix
    restrict: sp.csr_matrix
    restriction_mode: str


def build_transfers(fine_mesh: SpatialMesh, fine_grid: TimeGrid,
                    coarse_mesh: SpatialMesh, coarse_grid: TimeGrid,
                    restriction: str = "injection") -> TransferOperators:
    if fine_mesh.n % coarse_mesh.n or fine_grid.M % coarse_grid.M:
        raise ValueError("meshes are not nested")
    rs = fine_mesh.n // coarse_mesh.n
    rt = fine_grid.M // coarse_grid.M
    mf = fine_mesh.n + 1
    Px = _interp_1d(mf, rs)
    Ps = sp.kron(Px, sp.kron(Px, Px))  # z, y, x (x fastest)
    Pt = _interp_1d(fine_grid.M + 1, rt)
    P = sp.kron(Pt, sp.kron(Ps, sp.identity(BLOCK))).tocsr()
    if restriction == "injection":
        Sx = _select_1d(mf, rs)
        Ss = sp.kron(Sx, sp.kron(Sx, Sx))
        St = _select_1d(fine_grid.M + 1, rt)
        R = sp.kron(St, sp.kron(Ss, sp.identity(BLOCK))).tocsr()
    elif restriction == "transpose":
        R = P.T.tocsr()
    else:
        raise ValueError(f"unknown restriction mode {restriction!r}")
    return TransferOperators(prolong=P, restrict=R, restriction_mode=restriction)


@dataclass
class TwoLevelPreconditioner:
    """Multiplicative coarse-fine composition; apply under fGMRES."""

    F_fine: sp.csr_matrix
    F_coarse: sp.csr_matrix
    fine_one_level: OneLevelPreconditioner
    coarse_one_level: OneLevelPreconditioner
    transfers: TransferOperators
    coarse_cfg: KrylovConfig = field(
        default_factory=lambda: KrylovConfig(restart=4, rtol=1e-1, max_iters=4))
    exact_coarse: bool = False
    _coarse_lu: object = None

    def _coarse_solve(self, rc: np.ndarray) -> np.ndarray:
        if self.exact_coarse:
            if self._coarse_lu is None:
                self._coarse_lu = spla.splu(self.F_coarse.tocsc())
            return self._coarse_lu.solve(rc)
        x, _ = gmres(lambda u: self.F_coarse @ u, self.coarse_one_level.apply,
                     rc, self.coarse_cfg)
        return x

    def apply(self, x: np.ndarray) -> np.ndarray:
        rc = self.transfers.restrict @ x
        y = self.transfers.prolong @ self._coarse_solve(rc)
        return y + self.fine_one_level.apply(x - self.F_fine @ y)

    __call__ = apply


def build_two_level(F_fine: sp.csr_matrix, F_coarse: sp.csr_matrix,
                    transfers: TransferOperators,
                    fine_one_level: OneLevelPreconditioner,
                    coarse_one_level: OneLevelPreconditioner,
                    coarse_cfg: KrylovConfig | None = None,
                    exact_coarse: bool = False) -> TwoLevelPreconditioner:
    if transfers.prolong.shape != (F_fine.shape[0], F_coarse.shape[0]):
        raise ValueError("transfer operators do not match the systems")
    kwargs = {}
    if coarse_cfg is not None:
        kwargs["coarse_cfg"] = coarse_cfg
    return TwoLevelPreconditioner(
        F_fine=F_fine, F_coarse=F_coarse, fine_one_level=fine_one_level,
        coarse_one_level=coarse_one_level, transfers=transfers,
        exact_coarse=exact_coarse, **kwargs)
