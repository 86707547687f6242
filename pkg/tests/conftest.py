"""Shared fixtures: small meshes and a tiny assembled coupled system."""

import numpy as np
import pytest

import stinv
from stinv.fem import RegularizationSpec, assemble_spatial, assemble_temporal
from stinv.forward import ProblemSpec, sample_observations, solve_forward
from stinv.kkt import assemble_kkt


@pytest.fixture(scope="session")
def mesh1():
    return stinv.build_spatial_mesh(1)


@pytest.fixture(scope="session")
def mesh2():
    return stinv.build_spatial_mesh(2)


@pytest.fixture(scope="session")
def mesh4():
    return stinv.build_spatial_mesh(4)


def build_small_system(n_cells=2, M=4, meas_s=3, eps=0.0, seed=7,
                       source_kind="gaussian_pair", beta1=3.6e-5,
                       beta2=3.6e-3, reg_kind="H1H1", data_refine=2):
    """Full small pipeline: data on a refined mesh, then the coupled system
    on the inversion mesh.  Returns (system, obs, mesh, grid, ops, temporal)."""
    mesh = stinv.build_spatial_mesh(n_cells)
    grid = stinv.build_time_grid(M)
    data_mesh = stinv.build_spatial_mesh(n_cells * data_refine)
    data_grid = stinv.build_time_grid(M * data_refine)
    spec = ProblemSpec()
    source = stinv.make_source(source_kind)
    series = solve_forward(data_mesh, data_grid, spec, source)
    axis = np.linspace(-2.0, 2.0, meas_s)
    zz, yy, xx = np.meshgrid(axis, axis, axis, indexing="ij")
    points = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    obs = sample_observations(data_mesh, data_grid, series, mesh, grid,
                              points, eps, seed)
    ops = assemble_spatial(mesh, 1.0, (1.0, 1.0, 1.0),
                           measurement_points=points)
    temporal = assemble_temporal(grid)
    reg = RegularizationSpec(beta1=beta1, beta2=beta2, kind=reg_kind)
    system = assemble_kkt(mesh, grid, ops, temporal, reg, obs, spec)
    return system, obs, mesh, grid, ops, temporal


@pytest.fixture(scope="session")
def small_system():
    """Coupled system on 2^3 cells, M=4, noise-free 3^3 measurement grid."""
    return build_small_system()
