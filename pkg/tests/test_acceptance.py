"""End-to-end acceptance checks.

Each test prints one `criterion N: PASS/FAIL` line.  The suite covers oracle
equivalence of the preconditioned solver, discretization order of the forward
scheme, two-level vs. one-level iteration counts, fill/overlap/subdomain
trends, reconstruction quality under noise, the regularization comparison,
and the structural invariants of the assembled coupled system.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import build_small_system
from test_kkt import dense_variable_major_oracle

import stinv
from stinv.driver import (RunConfig, generate_data, measurement_grid,
                          nodal_source_series, run_inversion,
                          spacetime_l2_error)
from stinv.fem import RegularizationSpec, assemble_spatial, assemble_temporal
from stinv.forward import ProblemSpec, sample_observations, solve_forward
from stinv.kkt import assemble_kkt, extract_solution, point_block_permutation
from stinv.krylov import KrylovConfig, dense_lu_solve, gmres
from stinv.mesh import build_spatial_mesh, build_time_grid, decompose
from stinv.schwarz import build_one_level, build_transfers


def report(num, ok, detail):
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num}: {detail}"


@pytest.fixture(scope="module")
def base8():
    """Shared 8^3 / M=8 configuration and data for the trend criteria."""
    cfg = RunConfig(fine_cells=8, fine_M=8, parts=(2, 2, 2), Nt=2, overlap=1,
                    ilu_k=0, levels=1, meas_grid=7, eps=0.01, data_refine=2,
                    max_iters=3000)
    return cfg, generate_data(cfg)


@pytest.fixture(scope="module")
def base8_run(base8):
    cfg, data = base8
    rep, _, _ = run_inversion(cfg, data=data)
    return rep


class TestAcceptance:
    def test_criterion_1_oracle_equivalence(self):
        t0 = time.perf_counter()
        system = build_small_system(n_cells=2, M=4, eps=0.0)[0]
        x_ref = dense_lu_solve(system.F, system.b)
        decomp = decompose(system.mesh, system.grid, (2, 1, 1), 2, 1)
        pre = build_one_level(system.F, decomp, ilu_k=0)
        cfg = KrylovConfig(restart=50, rtol=1e-6, max_iters=3000)
        x, rep = gmres(lambda u: system.F @ u, pre.apply, system.b, cfg)
        diff = np.linalg.norm(x - x_ref) / np.linalg.norm(x_ref)
        elapsed = time.perf_counter() - t0
        report(1, rep.converged and diff <= 1e-5 and elapsed < 5.0,
               f"rel diff {diff:.3e}, {rep.iterations} iters, {elapsed:.1f}s")

    def test_criterion_2_exact_preconditioner(self):
        worst = 0
        for cells in (2, 4):
            system = build_small_system(n_cells=cells, M=4, eps=0.01)[0]
            decomp = decompose(system.mesh, system.grid, (1, 1, 1), 1, 1)
            pre = build_one_level(system.F, decomp, exact_local=True)
            cfg = KrylovConfig(restart=10, rtol=1e-8, max_iters=10)
            _, rep = gmres(lambda u: system.F @ u, pre.apply, system.b, cfg)
            assert rep.converged
            worst = max(worst, rep.iterations)
        report(2, worst <= 2, f"max iterations {worst}")

    def test_criterion_3_forward_order(self):
        k = np.pi / 4.0

        def exact(x, t):
            return t * np.sin(k * x[:, 0]) * x[:, 1] * x[:, 2]

        def source(x, t):
            s, c = np.sin(k * x[:, 0]), np.cos(k * x[:, 0])
            y, z = x[:, 1], x[:, 2]
            return s * y * z + t * (k * k * s * y * z + k * c * y * z
                                    + s * (y + z))

        def neumann(x, t):
            # a dC/dn on the z faces
            return t * np.sin(k * x[:, 0]) * x[:, 1] * np.sign(x[:, 2])

        t0 = time.perf_counter()
        errs, hs = [], []
        for n in (4, 8, 16):
            mesh = build_spatial_mesh(n)
            grid = build_time_grid(n)
            spec = ProblemSpec(p=exact, q=neumann)
            series = solve_forward(mesh, grid, spec, source)
            ops = assemble_spatial(mesh, 1.0, (1, 1, 1))
            e = series[-1] - exact(mesh.nodes, 1.0)
            errs.append(float(np.sqrt(e @ (ops.B @ e))))
            hs.append(mesh.h)
        slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
        elapsed = time.perf_counter() - t0
        report(3, slope >= 1.7 and elapsed < 120.0,
               f"observed order {slope:.2f}, {elapsed:.1f}s")

    def test_criterion_4_two_level_beats_one_level(self):
        t0 = time.perf_counter()
        cfg = RunConfig(fine_cells=16, fine_M=16, coarse_cells=8, coarse_M=8,
                        parts=(2, 2, 2), Nt=2, overlap=1, coarse_overlap=1,
                        ilu_k=0, levels=1, meas_grid=7, eps=0.01,
                        data_refine=1, restriction="transpose",
                        max_iters=3000)
        data = generate_data(cfg)
        one, _, _ = run_inversion(cfg, data=data)
        two, _, _ = run_inversion(replace(cfg, levels=2), data=data)
        elapsed = time.perf_counter() - t0
        ok = (one.converged and two.converged
              and two.iterations <= 0.7 * one.iterations
              and elapsed < 600.0)
        report(4, ok, f"two-level {two.iterations} vs one-level "
                      f"{one.iterations} iterations, {elapsed:.0f}s")

    def test_criterion_5_ilu_fill_trend(self, base8, base8_run):
        cfg, data = base8
        r1, _, _ = run_inversion(replace(cfg, ilu_k=1), data=data)
        ok = r1.converged and r1.iterations <= base8_run.iterations
        report(5, ok, f"ILU(1) {r1.iterations} vs ILU(0) "
                      f"{base8_run.iterations} iterations")

    def test_criterion_6_overlap_trend(self, base8, base8_run):
        cfg, data = base8
        r2, _, _ = run_inversion(replace(cfg, overlap=2), data=data)
        ok = r2.converged and r2.iterations <= base8_run.iterations
        report(6, ok, f"delta=2 {r2.iterations} vs delta=1 "
                      f"{base8_run.iterations} iterations")

    def test_criterion_7_one_level_non_scalability(self, base8, base8_run):
        cfg, data = base8
        r1, _, _ = run_inversion(replace(cfg, parts=(1, 1, 1), Nt=1),
                                 data=data)
        r8, _, _ = run_inversion(replace(cfg, Nt=1), data=data)
        iters = (r1.iterations, r8.iterations, base8_run.iterations)
        ok = (r1.converged and r8.converged
              and iters[0] <= iters[1] <= iters[2])
        report(7, ok, f"iterations for 1/8/16 subdomains: {iters}")

    def test_criterion_8_reconstruction_quality(self, base8, base8_run):
        cfg, data = base8
        r10, _, _ = run_inversion(replace(cfg, eps=0.10), data=data)
        ok = (base8_run.rel_error <= 0.5
              and r10.rel_error > base8_run.rel_error)
        report(8, ok, f"rel error {base8_run.rel_error:.3f} at 1% noise, "
                      f"{r10.rel_error:.3f} at 10%")

    def test_criterion_9_regularization_comparison(self):
        cfg = RunConfig(source="constant_four", fine_cells=6, fine_M=6,
                        meas_grid=7, eps=0.01, data_refine=2)
        data = generate_data(cfg)
        mesh = build_spatial_mesh(6)
        grid = build_time_grid(6)
        pts = measurement_grid(7)
        obs = sample_observations(*data, mesh, grid, pts, cfg.eps, cfg.seed)
        ops = assemble_spatial(mesh, 1.0, (1, 1, 1), measurement_points=pts)
        temporal = assemble_temporal(grid)
        spec = ProblemSpec()
        f_true = nodal_source_series(cfg.source_spec(), mesh, grid)
        errs = {}
        for kind, b2 in (("H1H1", 1e-3), ("H1L2", 1e-8)):
            system = assemble_kkt(mesh, grid, ops, temporal,
                                  RegularizationSpec(1e-5, b2, kind=kind),
                                  obs, spec)
            sol = extract_solution(system, dense_lu_solve(system.F,
                                                          system.b))
            errs[kind] = spacetime_l2_error(sol.f, f_true, ops.B,
                                            temporal.Mt)
        report(9, errs["H1H1"] < errs["H1L2"],
               f"H1H1 {errs['H1H1']:.3f} vs H1L2 {errs['H1L2']:.3f}")

    def test_criterion_10_structural_invariants(self, small_system):
        t0 = time.perf_counter()
        system, obs = small_system[0], small_system[1]
        N, M = system.N, system.M
        Fd = system.F.toarray()

        # layout permutation equivalence against the dense oracle
        F_vm, b_vm = dense_variable_major_oracle(system, obs)
        perm = point_block_permutation(N, M)
        F_expected = np.zeros_like(F_vm)
        F_expected[np.ix_(perm, perm)] = F_vm
        perm_ok = np.allclose(Fd, F_expected, atol=1e-13)

        # block-tridiagonal coupling in time
        coo = system.F.tocoo()
        lvl = lambda g: (g // 3) // N
        tri_ok = bool(np.all(np.abs(lvl(coo.row) - lvl(coo.col)) <= 1))

        # tensorized regularization and coupling blocks in the f rows
        reg, tmp, ops = system.reg, system.temporal, system.ops
        X = (ops.A_unit if reg.kind == "H1H1" else ops.B).toarray()
        Bd = ops.B.toarray()
        idx = lambda n, var: 3 * (n * N + np.arange(N)) + var
        tens_ok = True
        for m in range(M + 1):
            for n in range(max(0, m - 1), min(M, m + 1) + 1):
                W = (reg.beta1 * tmp.Lt[m, n] * Bd
                     + reg.beta2 * tmp.Mt[m, n] * X)
                tens_ok &= np.allclose(Fd[np.ix_(idx(m, 2), idx(n, 2))], W,
                                       atol=1e-13)
                tens_ok &= np.allclose(Fd[np.ix_(idx(m, 2), idx(n, 1))],
                                       -tmp.Mt[m, n] * Bd, atol=1e-13)

        # restricted writes partition the unknowns
        decomp = decompose(system.mesh, system.grid, (2, 2, 2), 2, 1)
        counts = np.zeros(3 * N * (M + 1), dtype=int)
        for sub in decomp.subdomains:
            lo, hi = sub.owned_steps
            for lev in range(lo, hi + 1):
                g = 3 * (lev * N + sub.owned_nodes)
                counts[g] += 1
                counts[g + 1] += 1
                counts[g + 2] += 1
        ras_ok = bool(np.all(counts == 1))

        # coarse-fine transfer round trip
        cmesh = build_spatial_mesh(1)
        cgrid = build_time_grid(2)
        tr = build_transfers(system.mesh, system.grid, cmesh, cgrid)
        xc = np.random.default_rng(11).standard_normal(tr.prolong.shape[1])
        round_ok = np.allclose(tr.restrict @ (tr.prolong @ xc), xc,
                               atol=1e-13)

        elapsed = time.perf_counter() - t0
        ok = (perm_ok and tri_ok and tens_ok and ras_ok and round_ok
              and elapsed < 60.0)
        report(10, ok, f"permutation {perm_ok}, tridiagonal {tri_ok}, "
                       f"tensorization {tens_ok}, restricted writes "
                       f"{ras_ok}, transfer round-trip {round_ok}, "
                       f"{elapsed:.1f}s")
