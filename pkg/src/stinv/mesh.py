"""Structured space/time grids on the cube and overlapping space-time decompositions.

The spatial domain is the cube (-2,2)^3 triangulated by splitting every cubic
cell of a uniform grid into 6 tetrahedra (Kuhn subdivision).  Boundary nodes
are tagged Dirichlet (|x1|=L or |x2|=S) or Neumann (|x3|=H, Dirichlet wins at
corner edges).  Time is partitioned uniformly.  Overlapping space-time
subdomains are boxes of nodes times ranges of time levels, extended by an
integral number of cells per dimension and trimmed at the global boundary.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

# Node boundary tags
INTERIOR = 0
GAMMA1 = 1  # Dirichlet part: |x1| = L or |x2| = S
GAMMA2 = 2  # Neumann part: |x3| = H, excluding Gamma1

HALF_WIDTH = 2.0  # L = S = H


@dataclass(frozen=True)
class SpatialMesh:
    """Uniform tetrahedral mesh of (-2,2)^3 with n cells per axis."""

    n: int
    h: float
    nodes: np.ndarray       # (N, 3) float
    tets: np.ndarray        # (6 n^3, 4) int, positively oriented
    boundary_tag: np.ndarray  # (N,) int in {INTERIOR, GAMMA1, GAMMA2}

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_tets(self) -> int:
        return self.tets.shape[0]

    def node_index(self, ix, iy, iz):
        """Lexicographic node index, x fastest."""
        m = self.n + 1
        return ix + m * (iy + m * iz)

    def tet_volumes(self) -> np.ndarray:
        p = self.nodes[self.tets]
        d = p[:, 1:] - p[:, :1]
        return np.linalg.det(d) / 6.0


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] into M steps."""

    M: int
    T: float

    @property
    def tau(self) -> float:
        return self.T / self.M

    @property
    def levels(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M + 1)


# Even permutations of (0,1,2) keep the Kuhn tet positively oriented; for odd
# permutations the last two vertices are swapped.
_KUHN_PERMS = list(itertools.permutations((0, 1, 2)))


def _perm_sign(p) -> int:
    s = 1
    q = list(p)
    for i in range(len(q)):
        while q[i] != i:
            j = q[i]
            q[i], q[j] = q[j], q[i]
            s = -s
    return s


def build_spatial_mesh(n_cells_per_axis: int) -> SpatialMesh:
    """Build the uniform Kuhn-subdivided tetrahedral mesh of (-2,2)^3."""
    n = int(n_cells_per_axis)
    if n < 1:
        raise ValueError("n_cells_per_axis must be >= 1")
    m = n + 1
    h = 2.0 * HALF_WIDTH / n

    axis = np.linspace(-HALF_WIDTH, HALF_WIDTH, m)
    zz, yy, xx = np.meshgrid(axis, axis, axis, indexing="ij")
    nodes = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    ix = np.arange(m)
    on1 = (ix == 0) | (ix == n)
    gx, gy, gz = np.meshgrid(on1, on1, on1, indexing="ij")  # iz, iy, ix order
    # meshgrid above: first arg varies along axis 0 (iz), last along axis 2 (ix)
    on_g1 = (gz | gy).ravel()  # |x1|=L or |x2|=S  (gz is ix-plane, gy is iy-plane)
    on_g2 = gx.ravel() & ~on_g1
    tag = np.zeros(m ** 3, dtype=np.int8)
    tag[on_g1] = GAMMA1
    tag[on_g2] = GAMMA2

    corners = np.array(list(itertools.product((0, 1), repeat=3)))  # (8,3) as (dx,dy,dz)? see below
    # cell corner offsets in (ix, iy, iz)
    tets = np.empty((6 * n ** 3, 4), dtype=np.int64)
    e = np.eye(3, dtype=np.int64)
    # Precompute the 6 tet corner-offset quadruples of the unit cube
    kuhn = []
    for p in _KUHN_PERMS:
        c0 = np.zeros(3, dtype=np.int64)
        c1 = c0 + e[p[0]]
        c2 = c1 + e[p[1]]
        c3 = c2 + e[p[2]]
        quad = [c0, c1, c2, c3]
        if _perm_sign(p) < 0:
            quad[2], quad[3] = quad[3], quad[2]
        kuhn.append(np.array(quad))
    kuhn = np.array(kuhn)  # (6, 4, 3)

    cell_idx = np.arange(n ** 3)
    cx = cell_idx % n
    cy = (cell_idx // n) % n
    cz = cell_idx // (n * n)
    base = np.column_stack([cx, cy, cz])  # (ncell, 3)
    for t in range(6):
        offs = kuhn[t]  # (4,3)
        for v in range(4):
            pos = base + offs[v]
            idx = pos[:, 0] + m * (pos[:, 1] + m * pos[:, 2])
            tets[t::6, v] = idx

    mesh = SpatialMesh(n=n, h=h, nodes=nodes, tets=tets, boundary_tag=tag)
    return mesh


def build_time_grid(M: int, T: float = 1.0) -> TimeGrid:
    """Uniform time grid with M steps on [0, T]."""
    if M < 2:
        raise ValueError("M must be >= 2")
    if T <= 0:
        raise ValueError("T must be positive")
    return TimeGrid(M=int(M), T=float(T))


def _partition_1d(n_cells: int, parts: int) -> list[tuple[int, int]]:
    """Contiguous cell ranges [start, end] per part; remainder to the last part."""
    if parts < 1 or parts > n_cells:
        raise ValueError(f"cannot split {n_cells} cells into {parts} parts")
    size = n_cells // parts
    ranges = []
    for p in range(parts):
        s = p * size
        e = (p + 1) * size - 1 if p < parts - 1 else n_cells - 1
        ranges.append((s, e))
    return ranges


def _extend(rng: tuple[int, int], delta: int, n_cells: int) -> tuple[int, int]:
    return (max(0, rng[0] - delta), min(n_cells - 1, rng[1] + delta))


def _owned_nodes_1d(rng: tuple[int, int], part: int, parts: int) -> tuple[int, int]:
    """Node range owned by a cell range: node i goes with cell i, the very last
    node of the axis goes to the last part."""
    s, e = rng
    return (s, e + 1 if part == parts - 1 else e)


@dataclass(frozen=True)
class Subdomain:
    """One overlapping space-time subdomain: a box of nodes times time levels."""

    owned_nodes: np.ndarray   # sorted global node indices
    ext_nodes: np.ndarray
    owned_steps: tuple[int, int]  # inclusive range of time levels
    ext_steps: tuple[int, int]


@dataclass(frozen=True)
class SpaceTimeDecomposition:
    """Overlapping decomposition of the space-time domain."""

    mesh: SpatialMesh
    grid: TimeGrid
    parts_per_axis: tuple[int, int, int]
    Nt: int
    delta: int
    subdomains: tuple[Subdomain, ...]
    coarse: bool = False

    @property
    def Ns(self) -> int:
        px, py, pz = self.parts_per_axis
        return px * py * pz

    @property
    def num_subdomains(self) -> int:
        return len(self.subdomains)


def _box_nodes(mesh: SpatialMesh, rx, ry, rz) -> np.ndarray:
    m = mesh.n + 1
    ix = np.arange(rx[0], rx[1] + 1)
    iy = np.arange(ry[0], ry[1] + 1)
    iz = np.arange(rz[0], rz[1] + 1)
    return (ix[None, None, :] + m * (iy[None, :, None] + m * iz[:, None, None])).ravel()


def decompose(mesh: SpatialMesh, grid: TimeGrid,
              parts_per_axis: tuple[int, int, int], Nt: int,
              delta: int, coarse: bool = False) -> SpaceTimeDecomposition:
    """Overlapping space-time decomposition with overlap `delta` cells per
    dimension, trimmed at the boundary of the space-time domain."""
    if Nt > grid.M:
        raise ValueError("Nt must not exceed the number of time steps")
    if delta < 0:
        raise ValueError("overlap must be nonnegative")
    n = mesh.n
    px, py, pz = parts_per_axis
    cell_ranges = [_partition_1d(n, p) for p in (px, py, pz)]
    t_cells = _partition_1d(grid.M, Nt)

    subs = []
    for jt, trng in enumerate(t_cells):
        o_steps = _owned_nodes_1d(trng, jt, Nt)
        if delta == 0:
            # no overlap at all: local problems live on the owned sets only
            e_steps = o_steps
        else:
            e_cells = _extend(trng, delta, grid.M)
            e_steps = (e_cells[0], e_cells[1] + 1)
        for kz, rz in enumerate(cell_ranges[2]):
            for ky, ry in enumerate(cell_ranges[1]):
                for kx, rx in enumerate(cell_ranges[0]):
                    orx = _owned_nodes_1d(rx, kx, px)
                    ory = _owned_nodes_1d(ry, ky, py)
                    orz = _owned_nodes_1d(rz, kz, pz)
                    if delta == 0:
                        ext_ranges = (orx, ory, orz)
                    else:
                        erx = _extend(rx, delta, n)
                        ery = _extend(ry, delta, n)
                        erz = _extend(rz, delta, n)
                        ext_ranges = ((erx[0], erx[1] + 1),
                                      (ery[0], ery[1] + 1),
                                      (erz[0], erz[1] + 1))
                    sub = Subdomain(
                        owned_nodes=_box_nodes(mesh, orx, ory, orz),
                        ext_nodes=_box_nodes(mesh, *ext_ranges),
                        owned_steps=o_steps,
                        ext_steps=e_steps,
                    )
                    subs.append(sub)
    return SpaceTimeDecomposition(
        mesh=mesh, grid=grid, parts_per_axis=tuple(parts_per_axis),
        Nt=Nt, delta=delta, subdomains=tuple(subs), coarse=coarse)


def build_nested_pair(fine_cells: int, fine_M: int,
                      ratio_space: int, ratio_time: int, T: float = 1.0):
    """Build a nested fine/coarse mesh-grid pair.

    The coarse nodes are a subset of the fine nodes in both space and time;
    non-divisible ratios are rejected.
    """
    if fine_cells % ratio_space != 0:
        raise ValueError("fine_cells must be divisible by ratio_space")
    if fine_M % ratio_time != 0:
        raise ValueError("fine_M must be divisible by ratio_time")
    fine = (build_spatial_mesh(fine_cells), build_time_grid(fine_M, T))
    coarse = (build_spatial_mesh(fine_cells // ratio_space),
              build_time_grid(fine_M // ratio_time, T))
    return fine, coarse
