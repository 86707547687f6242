"""Space-time coupled solver for the 3D unsteady inverse convection-diffusion
source problem: coupled optimality-system assembly plus one- and two-level
space-time Schwarz preconditioned Krylov solvers."""

from .fem import RegularizationSpec, assemble_spatial, assemble_temporal, build_B3
from .forward import (ObservationSet, ProblemSpec, generate_observations,
                      sample_observations, solve_forward)
from .kkt import (KktSolution, KktSystem, assemble_kkt, evaluate_objective,
                  extract_solution)
from .krylov import KrylovConfig, SolveReport, dense_lu_solve, fgmres, gmres
from .mesh import (SpaceTimeDecomposition, SpatialMesh, TimeGrid,
                   build_nested_pair, build_spatial_mesh, build_time_grid,
                   decompose)
from .schwarz import (OneLevelPreconditioner, TwoLevelPreconditioner,
                      build_one_level, build_transfers, build_two_level)
from .sources import SourceSpec, eval_source, make_source

__all__ = [
    "RegularizationSpec", "assemble_spatial", "assemble_temporal", "build_B3",
    "ObservationSet", "ProblemSpec", "generate_observations",
    "sample_observations", "solve_forward",
    "KktSolution", "KktSystem", "assemble_kkt", "evaluate_objective",
    "extract_solution",
    "KrylovConfig", "SolveReport", "dense_lu_solve", "fgmres", "gmres",
    "SpaceTimeDecomposition", "SpatialMesh", "TimeGrid", "build_nested_pair",
    "build_spatial_mesh", "build_time_grid", "decompose",
    "OneLevelPreconditioner", "TwoLevelPreconditioner", "build_one_level",
    "build_transfers", "build_two_level",
    "SourceSpec", "eval_source", "make_source",
]

__version__ = "0.1.0"
