"""Element matrices, global assembly, temporal matrices and B3.

Oracles: barycentric monomial integration on a tetrahedron via the factorial
formula, independently computed basis gradients (affine coefficient solve),
and Gauss quadrature in time for the hat-function products.
"""

import numpy as np
import pytest
import scipy.sparse as sp

import stinv
from stinv.fem import (RegularizationSpec, assemble_spatial, assemble_temporal,
                       build_B3, element_matrices, gamma2_load, snap_to_nodes)

REF_TET = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def tet_volume(coords):
    d = coords[1:] - coords[0]
    return np.linalg.det(d) / 6.0


def oracle_gradients(coords):
    """Gradient of each P1 basis function from its affine coefficients."""
    A = np.column_stack([np.ones(4), coords])
    grads = np.empty((4, 3))
    for i in range(4):
        c = np.linalg.solve(A, np.eye(4)[i])
        grads[i] = c[1:]
    return grads


def oracle_element(coords, a, v):
    """Exact P1 element matrices: int lam_i lam_j = 2V/20 (i != j), V/10
    (i = j) by the factorial formula; int phi_i = V/4."""
    V = tet_volume(coords)
    grads = oracle_gradients(coords)
    B = np.full((4, 4), V / 20.0) + np.diag(np.full(4, V / 20.0))
    A = a * V * grads @ grads.T
    E = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            E[i, j] = (grads[j] @ v) * V / 4.0  # (v . grad phi_j, phi_i)
    return A, B, E


class TestElementMatrices:
    def test_reference_mass(self):
        _, B_e, _ = element_matrices(REF_TET, 1.0, np.ones(3))
        assert np.allclose(np.diag(B_e), 1.0 / 60.0)
        off = B_e - np.diag(np.diag(B_e))
        assert np.allclose(off[off != 0], 1.0 / 120.0)

    def test_reference_stiffness_entry(self):
        A_e, _, _ = element_matrices(REF_TET, 1.0, np.ones(3))
        # basis of vertex (1,0,0) has gradient (1,0,0); entry = V * |grad|^2
        assert A_e[1, 1] == pytest.approx(1.0 / 6.0)

    def test_reference_convection_column(self):
        _, _, E_e = element_matrices(REF_TET, 1.0, np.array([1.0, 1, 1]))
        # the vertex-(1,0,0) coefficient couples to every test function with
        # the same weight (v . grad phi) * V / 4 = 1/24
        assert np.allclose(E_e[:, 1], 1.0 / 24.0)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_random_tet_against_oracle(self, seed):
        rng = np.random.default_rng(seed)
        coords = REF_TET + 0.2 * rng.standard_normal((4, 3))
        if tet_volume(coords) <= 0:
            coords = coords[[0, 2, 1, 3]]
        v = rng.standard_normal(3)
        a = float(rng.uniform(0.5, 2.0))
        A_e, B_e, E_e = element_matrices(coords, a, v)
        A_o, B_o, E_o = oracle_element(coords, a, v)
        assert np.allclose(A_e, A_o, atol=1e-13)
        assert np.allclose(B_e, B_o, atol=1e-14)
        assert np.allclose(E_e, E_o, atol=1e-13)

    def test_rejects_degenerate(self):
        bad = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
        with pytest.raises(ValueError):
            element_matrices(bad, 1.0, np.ones(3))


class TestAssembly:
    def test_mass_total(self, mesh2):
        ops = assemble_spatial(mesh2, 1.0, (1, 1, 1))
        assert ops.B.sum() == pytest.approx(64.0)

    def test_interior_convection_row_sums(self, mesh4):
        ops = assemble_spatial(mesh4, 1.0, (1, 1, 1))
        interior = np.nonzero(mesh4.boundary_tag == 0)[0]
        # E acts on the coefficient vector, so the divergence-theorem zero
        # shows up in the columns of interior basis functions
        sums = np.asarray(ops.E.sum(axis=0)).ravel()
        assert np.allclose(sums[interior], 0.0, atol=1e-13)
        row_sums = np.asarray(ops.A.sum(axis=1)).ravel()
        assert np.allclose(row_sums[interior], 0.0, atol=1e-13)

    def test_unit_coefficient(self, mesh2):
        ops = assemble_spatial(mesh2, 1.0, (1, 1, 1))
        assert (ops.A - ops.A_unit).nnz == 0 or \
            np.allclose((ops.A - ops.A_unit).toarray(), 0.0)

    def test_matches_elementwise_assembly(self, mesh1):
        ops = assemble_spatial(mesh1, 1.0, (1.0, 2.0, -1.0))
        N = mesh1.num_nodes
        A_o = np.zeros((N, N))
        B_o = np.zeros((N, N))
        E_o = np.zeros((N, N))
        for tet in mesh1.tets:
            Ae, Be, Ee = oracle_element(mesh1.nodes[tet], 1.0,
                                        np.array([1.0, 2.0, -1.0]))
            for li, gi in enumerate(tet):
                for lj, gj in enumerate(tet):
                    A_o[gi, gj] += Ae[li, lj]
                    B_o[gi, gj] += Be[li, lj]
                    E_o[gi, gj] += Ee[li, lj]
        assert np.allclose(ops.A.toarray(), A_o, atol=1e-13)
        assert np.allclose(ops.B.toarray(), B_o, atol=1e-14)
        assert np.allclose(ops.E.toarray(), E_o, atol=1e-13)

    def test_mass_spd(self, mesh2):
        ops = assemble_spatial(mesh2, 1.0, (1, 1, 1))
        B = ops.B.toarray()
        assert np.allclose(B, B.T)
        assert np.linalg.eigvalsh(B).min() > 0

    def test_stiffness_psd_symmetric(self, mesh2):
        ops = assemble_spatial(mesh2, 1.0, (1, 1, 1))
        A = ops.A.toarray()
        assert np.allclose(A, A.T, atol=1e-13)
        assert np.linalg.eigvalsh(A).min() > -1e-12


def hat(levels, m, t):
    """1D hat function theta_m on the time partition."""
    tau = levels[1] - levels[0]
    return np.maximum(0.0, 1.0 - np.abs(t - levels[m]) / tau)


def hat_prime(levels, m, t):
    tau = levels[1] - levels[0]
    out = np.zeros_like(t)
    out[(t > levels[m] - tau) & (t < levels[m])] = 1.0 / tau
    out[(t > levels[m]) & (t < levels[m] + tau)] = -1.0 / tau
    return out


def time_integral(levels, func):
    """3-point Gauss quadrature per interval."""
    gp, gw = np.polynomial.legendre.leggauss(3)
    total = 0.0
    for a, b in zip(levels[:-1], levels[1:]):
        t = 0.5 * (b - a) * gp + 0.5 * (a + b)
        total += 0.5 * (b - a) * np.sum(gw * func(t))
    return total


class TestTemporal:
    def test_m2_mass(self):
        temporal = assemble_temporal(stinv.build_time_grid(2, 1.0))
        expected = np.array([[1 / 6, 1 / 12, 0],
                             [1 / 12, 1 / 3, 1 / 12],
                             [0, 1 / 12, 1 / 6]])
        assert np.allclose(temporal.Mt, expected)

    def test_stiffness_annihilates_constants(self):
        temporal = assemble_temporal(stinv.build_time_grid(5, 1.0))
        assert np.allclose(temporal.Lt @ np.ones(6), 0.0, atol=1e-12)

    def test_mass_total(self):
        for M, T in ((4, 1.0), (7, 2.0)):
            temporal = assemble_temporal(stinv.build_time_grid(M, T))
            assert temporal.Mt.sum() == pytest.approx(T)

    def test_against_quadrature_oracle(self):
        grid = stinv.build_time_grid(3, 1.0)
        temporal = assemble_temporal(grid)
        lv = grid.levels
        for m in range(4):
            for n in range(4):
                mass = time_integral(lv, lambda t: hat(lv, m, t) * hat(lv, n, t))
                stiff = time_integral(
                    lv, lambda t: hat_prime(lv, m, t) * hat_prime(lv, n, t))
                assert temporal.Mt[m, n] == pytest.approx(mass, abs=1e-14)
                assert temporal.Lt[m, n] == pytest.approx(stiff, abs=1e-12)


class TestTensorization:
    """The space-time regularization and coupling blocks factor into
    temporal weight times spatial matrix; checked against direct space-time
    quadrature."""

    def test_w_and_d_blocks(self, mesh1):
        grid = stinv.build_time_grid(2, 1.0)
        temporal = assemble_temporal(grid)
        ops = assemble_spatial(mesh1, 1.0, (1, 1, 1))
        lv = grid.levels
        beta1, beta2 = 2.5e-3, 1.7e-2
        B = ops.B.toarray()
        K = ops.A_unit.toarray()
        for m in range(3):
            for n in range(3):
                tm = time_integral(lv, lambda t: hat(lv, m, t) * hat(lv, n, t))
                ts = time_integral(
                    lv, lambda t: hat_prime(lv, m, t) * hat_prime(lv, n, t))
                W_direct = beta1 * ts * B + beta2 * tm * K
                W_tensor = (beta1 * temporal.Lt[m, n] * B
                            + beta2 * temporal.Mt[m, n] * K)
                assert np.allclose(W_tensor, W_direct, atol=1e-12)
                D_direct = tm * B
                assert np.allclose(temporal.Mt[m, n] * B, D_direct, atol=1e-13)

    def test_h1l2_variant_uses_mass(self, mesh1):
        from stinv.kkt import regularization_blocks
        grid = stinv.build_time_grid(2, 1.0)
        temporal = assemble_temporal(grid)
        ops = assemble_spatial(mesh1, 1.0, (1, 1, 1))
        Wt, Wx = regularization_blocks(
            ops, temporal, RegularizationSpec(1e-5, 1e-8, kind="H1L2"))
        assert np.allclose(Wt.toarray(), 1e-5 * ops.B.toarray())
        assert np.allclose(Wx.toarray(), 1e-8 * ops.B.toarray())


class TestB3:
    def test_uniform_grid_at_most_s_cubed(self):
        mesh = stinv.build_spatial_mesh(8)
        axis = np.linspace(-2, 2, 14)
        zz, yy, xx = np.meshgrid(axis, axis, axis, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
        B3, nodes = build_B3(mesh, pts)
        assert len(nodes) <= 14 ** 3
        assert B3.diagonal().sum() == len(nodes)

    def test_single_exact_node(self, mesh2):
        B3, nodes = build_B3(mesh2, np.array([[0.0, 0.0, 0.0]]))
        assert len(nodes) == 1
        assert B3.diagonal().sum() == 1.0
        assert np.allclose(mesh2.nodes[nodes[0]], 0.0)

    def test_dedupe(self, mesh2):
        pts = np.array([[0.1, 0.1, 0.1], [-0.1, -0.1, -0.1]])  # both -> origin
        B3, nodes = build_B3(mesh2, pts)
        assert len(nodes) == 1
        assert B3.diagonal().sum() == 1.0

    def test_rejects_outside(self, mesh2):
        with pytest.raises(ValueError):
            snap_to_nodes(mesh2, np.array([[3.0, 0.0, 0.0]]))


class TestGamma2Load:
    def test_unit_flux_total(self, mesh2):
        # <1, sum of phis> over Gamma2 = area of the two z-faces = 32
        load = gamma2_load(mesh2, np.ones(mesh2.num_nodes))
        assert load.sum() == pytest.approx(32.0)

    def test_support_on_gamma2_plane(self, mesh2):
        load = gamma2_load(mesh2, np.ones(mesh2.num_nodes))
        off_plane = np.abs(np.abs(mesh2.nodes[:, 2]) - 2.0) > 1e-12
        assert np.allclose(load[off_plane], 0.0)


class TestRegularizationSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            RegularizationSpec(-1.0, 0.0)
        with pytest.raises(ValueError):
            RegularizationSpec(1.0, 1.0, kind="H2")
        spec = RegularizationSpec(1e-5, 1e-3)
        assert spec.kind == "H1H1"
