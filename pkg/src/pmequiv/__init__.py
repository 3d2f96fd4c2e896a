"""Lowest-order primal, mixed, hybrid and projection schemes for anisotropic
diffusion on simplicial meshes, with numerical certificates of their
equivalence."""

from .errors import *  # noqa: F401,F403
from .mesh import Mesh, build_mesh, load_mesh, mesh_from_json, structured_triangulation, uniform_refine
from .local_spaces import (
    LocalPotentialSpace,
    Mobility,
    flux_map_surjectivity_check,
    ibp_pairing,
    local_space,
    potential_from_dofs,
    projected_gradient_from_dofs,
)
from .schemes import (
    LoadField,
    SchemeConfig,
    solve_condensed,
    solve_hybrid_mixed,
    solve_hybrid_primal,
    solve_mixed,
    solve_primal,
    solve_projection,
)
from .equivalence import EquivalenceReport, audit_solution_files, mixed_to_primal, primal_to_mixed
from .harness import ManufacturedCase, manufactured_case, run_convergence, verify
from .cli import cli_main

__version__ = "0.1.0"
