"""P1 finite element assembly in space and hat-function matrices in time.

Spatial matrices (node x node, no boundary treatment here):
  A       diffusion stiffness, (a grad phi_i, grad phi_j)
  B       mass, (phi_i, phi_j)
  E       convection, applied to the concentration coefficient vector:
          E[i, j] = (div(v phi_j), phi_i); its transpose appears in the
          adjoint equation
  A_unit  stiffness with unit coefficient (regularization term)
  B3      0/1 diagonal marking measurement nodes

Temporal matrices ((M+1) x (M+1)) of the hat functions on the uniform time
partition: mass Mt and stiffness Lt.  Space-time operators tensorize as
D^{mn} = Mt[m,n] B, L^{mn} = Lt[m,n] B, K^{mn} = Mt[m,n] A_unit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import GAMMA2, HALF_WIDTH, SpatialMesh, TimeGrid


@dataclass(frozen=True)
class SpatialOperators:
    A: sp.csr_matrix
    B: sp.csr_matrix
    E: sp.csr_matrix
    A_unit: sp.csr_matrix
    B3: sp.csr_matrix
    measurement_nodes: np.ndarray


@dataclass(frozen=True)
class TemporalOperators:
    Mt: np.ndarray  # (M+1, M+1) tridiagonal hat mass
    Lt: np.ndarray  # (M+1, M+1) tridiagonal hat stiffness
    tau: float


@dataclass(frozen=True)
class RegularizationSpec:
    """Tikhonov weights: beta1 penalizes the time derivative, beta2 either the
    spatial gradient (H1H1) or the value itself (H1L2)."""

    beta1: float
    beta2: float
    kind: str = "H1H1"  # or "H1L2"

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("regularization weights must be nonnegative")
        if self.kind not in ("H1H1", "H1L2"):
            raise ValueError(f"unknown regularization kind {self.kind!r}")


def element_matrices(tet_coords: np.ndarray, a: float, v: np.ndarray):
    """Exact P1 element matrices on one tetrahedron.

    Returns (A_e, B_e, E_e) with E_e[i, j] = (v . grad phi_j, phi_i), so the
    assembled E acts on the concentration vector.
    """
    p = np.asarray(tet_coords, dtype=float)
    d = p[1:] - p[0]
    vol = np.linalg.det(d) / 6.0
    if vol <= 0:
        raise ValueError("degenerate or negatively oriented tetrahedron")
    # grad of barycentric functions: rows of inv(d) give grads of phi_1..phi_3
    gi = np.linalg.inv(d)
    g123 = gi.T  # row i is grad(phi_{i+1})
    grads = np.vstack([-g123.sum(axis=0), g123])  # (4, 3)
    A_e = a * vol * grads @ grads.T
    B_e = vol / 20.0 * (np.ones((4, 4)) + np.eye(4))
    vg = grads @ np.asarray(v, dtype=float)  # (v . grad phi_c) per vertex
    E_e = vol / 4.0 * np.tile(vg, (4, 1))  # column c constant
    return A_e, B_e, E_e


def _element_grads(mesh: SpatialMesh):
    p = mesh.nodes[mesh.tets]  # (nt, 4, 3)
    d = p[:, 1:] - p[:, :1]
    vol = np.linalg.det(d) / 6.0
    gi = np.linalg.inv(d)  # (nt, 3, 3)
    g123 = np.transpose(gi, (0, 2, 1))  # grads of phi_1..3 as rows
    g0 = -g123.sum(axis=1, keepdims=True)
    grads = np.concatenate([g0, g123], axis=1)  # (nt, 4, 3)
    return vol, grads


def _scatter(mesh: SpatialMesh, local: np.ndarray) -> sp.csr_matrix:
    n = mesh.num_nodes
    rows = np.repeat(mesh.tets, 4, axis=1).ravel()
    cols = np.tile(mesh.tets, (1, 4)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    return mat.tocsr()


def assemble_spatial(mesh: SpatialMesh, a, v, measurement_points=None) -> SpatialOperators:
    """Assemble global spatial operators (no boundary condition applied).

    `a` is a scalar or a callable of the element centroid; `v` is a constant
    3-vector.
    """
    vol, grads = _element_grads(mesh)
    nt = mesh.num_tets
    if callable(a):
        centroids = mesh.nodes[mesh.tets].mean(axis=1)
        a_el = np.asarray(a(centroids), dtype=float)
    else:
        a_el = np.full(nt, float(a))

    gg = np.einsum("tic,tjc->tij", grads, grads)
    A_loc = (a_el * vol)[:, None, None] * gg
    Au_loc = vol[:, None, None] * gg
    B_loc = vol[:, None, None] / 20.0 * (np.ones((4, 4)) + np.eye(4))
    vg = grads @ np.asarray(v, dtype=float)  # (nt, 4)
    E_loc = (vol / 4.0)[:, None, None] * np.repeat(vg[:, None, :], 4, axis=1)

    A = _scatter(mesh, A_loc)
    A_unit = _scatter(mesh, Au_loc)
    B = _scatter(mesh, B_loc)
    E = _scatter(mesh, E_loc)

    if measurement_points is not None:
        B3, meas = build_B3(mesh, measurement_points)
    else:
        B3 = sp.csr_matrix((mesh.num_nodes, mesh.num_nodes))
        meas = np.empty(0, dtype=np.int64)
    return SpatialOperators(A=A, B=B, E=E, A_unit=A_unit, B3=B3,
                            measurement_nodes=meas)


def assemble_temporal(grid: TimeGrid) -> TemporalOperators:
    """Tridiagonal 1D hat-function mass and stiffness matrices on the grid."""
    M = grid.M
    tau = grid.tau
    Mt = np.zeros((M + 1, M + 1))
    Lt = np.zeros((M + 1, M + 1))
    i = np.arange(M)
    Mt[i, i] += tau / 3.0
    Mt[i + 1, i + 1] += tau / 3.0
    Mt[i, i + 1] = tau / 6.0
    Mt[i + 1, i] = tau / 6.0
    Lt[i, i] += 1.0 / tau
    Lt[i + 1, i + 1] += 1.0 / tau
    Lt[i, i + 1] = -1.0 / tau
    Lt[i + 1, i] = -1.0 / tau
    return TemporalOperators(Mt=Mt, Lt=Lt, tau=tau)


def snap_to_nodes(mesh: SpatialMesh, points: np.ndarray) -> np.ndarray:
    """Nearest-node indices for points in the closure of the cube; duplicates
    are collapsed."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(np.abs(pts) > HALF_WIDTH + 1e-12):
        raise ValueError("measurement point outside the domain")
    idx = np.rint((pts + HALF_WIDTH) / mesh.h).astype(np.int64)
    idx = np.clip(idx, 0, mesh.n)
    m = mesh.n + 1
    nodes = idx[:, 0] + m * (idx[:, 1] + m * idx[:, 2])
    return np.unique(nodes)


def build_B3(mesh: SpatialMesh, measurement_points: np.ndarray):
    """Diagonal 0/1 measurement matrix and the marked node indices."""
    nodes = snap_to_nodes(mesh, measurement_points)
    diag = np.zeros(mesh.num_nodes)
    diag[nodes] = 1.0
    return sp.diags(diag).tocsr(), nodes


def gamma2_boundary_faces(mesh: SpatialMesh) -> np.ndarray:
    """Triangles of the mesh surface lying on the Neumann part |x3| = H."""
    z = mesh.nodes[:, 2]
    on_plane = np.isclose(np.abs(z), HALF_WIDTH)
    faces = []
    local_faces = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]
    for lf in local_faces:
        tri = mesh.tets[:, lf]
        keep = on_plane[tri].all(axis=1)
        faces.append(tri[keep])
    return np.vstack(faces)


def gamma2_load(mesh: SpatialMesh, q_nodal: np.ndarray) -> np.ndarray:
    """Boundary load <q, phi_i> on Gamma2 with q nodally interpolated."""
    faces = gamma2_boundary_faces(mesh)
    out = np.zeros(mesh.num_nodes)
    if faces.size == 0:
        return out
    p = mesh.nodes[faces]
    areas = 0.5 * np.linalg.norm(
        np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    qf = q_nodal[faces]  # (nf, 3)
    # P1 facet mass: area/12 * (2 q_i + q_j + q_k)
    contrib = areas[:, None] / 12.0 * (qf + qf.sum(axis=1, keepdims=True))
    np.add.at(out, faces.ravel(), contrib.ravel())
    return out
