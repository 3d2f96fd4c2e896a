"""Conversions between primal and mixed solutions, with every residual that
should vanish when the two formulations are equivalent.

Reports never raise on large residuals; thresholds belong to the caller.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .local_spaces import (
    Mobility,
    discrete_divergence,
    flux_gap_l2,
    flux_l2_gram,
    load_mobility,
    local_space,
    normal_traces,
)
from .mesh import load_mesh
from .polyquad import MAX_DEGREE, cell_rule
from .schemes import (
    HybridMixedSolution,
    LoadField,
    MixedSolution,
    PrimalSolution,
    assemble_mixed,
    assemble_primal,
    load_means,
    mixed_from_cell_flux,
    mixed_from_face_flux,
    parse_dump,
    primal_flux,
    primal_from_cell_dofs,
)


@dataclass
class EquivalenceReport:
    hdiv_jump_max: float = 0.0
    potential_jump_max: float = 0.0
    divergence_residual_max: float = 0.0
    constitutive_residual: float = 0.0
    cross_scheme_flux_gap: float = 0.0
    cross_scheme_mean_gap: float = 0.0
    mixed_residual: float = 0.0  # normwise backward error of the mixed equations
    primal_residual: float = 0.0  # normwise backward error of the primal equations
    flux_norm: float = 0.0
    potential_norm: float = 0.0
    load_norm: float = 0.0

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}


# ----------------------------------------------------------------------------
# individual measures


def broken_flux_norm(mesh, cell_flux) -> float:
    return float(
        np.sqrt(sum(c @ flux_l2_gram(mesh, K) @ c for K, c in enumerate(np.asarray(cell_flux))))
    )


def cell_mean_norm(mesh, cell_mean) -> float:
    return float(np.sqrt(mesh.volumes @ np.asarray(cell_mean) ** 2))


def broken_potential_norm(mesh, mobility, coeffs, flavor="weak") -> float:
    total = 0.0
    for K, c in enumerate(coeffs):
        pts, wts = cell_rule(mesh, K, MAX_DEGREE)
        total += wts @ local_space(mesh, mobility, K, flavor).evaluate(c, pts) ** 2
    return float(np.sqrt(total))


def load_norm(mesh, load) -> float:
    total = 0.0
    for K in range(mesh.n_cells):
        pts, wts = cell_rule(mesh, K, MAX_DEGREE)
        total += wts @ np.asarray(load(pts)) ** 2
    return float(np.sqrt(total))


def hdiv_jump_max(mesh, cell_flux) -> float:
    """max over interfaces of |sigma_{K+}.n_F - sigma_{K-}.n_F|."""
    traces = [normal_traces(mesh, K, c) for K, c in enumerate(cell_flux)]
    worst = 0.0
    for F in mesh.interior_faces:
        Kp, Km = mesh.face_cells[F]
        ip, im = mesh.local_face_index(Kp, F), mesh.local_face_index(Km, F)
        worst = max(worst, abs(traces[Kp][ip] + traces[Km][im]))
    return float(worst)


def potential_jump_max(mesh, cell_dofs) -> float:
    """max over faces of |pi0_F [[u]]| (the trace itself on boundary faces)."""
    worst = 0.0
    for F, cells in enumerate(mesh.face_cells):
        vals = [cell_dofs[K][1 + mesh.local_face_index(K, F)] for K in cells]
        jump = vals[0] - vals[1] if len(vals) == 2 else vals[0]
        worst = max(worst, abs(jump))
    return float(worst)


def divergence_residual_max(mesh, cell_flux, fbar) -> float:
    return float(
        max(
            abs(-discrete_divergence(mesh, K, c) - fbar[K])
            for K, c in enumerate(np.asarray(cell_flux))
        )
    )


def constitutive_residual(mesh, mobility, cell_flux, coeffs, flavor="weak") -> float:
    """||sigma - b grad u||_Omega (broken), by quadrature on the actual functions."""
    total = 0.0
    for K, (tau, c) in enumerate(zip(cell_flux, coeffs)):
        total += flux_gap_l2(local_space(mesh, mobility, K, flavor), c, tau) ** 2
    return float(np.sqrt(total))


def _backward_error(A, x, b) -> float:
    r = A @ x - b
    scale = abs(A).max(axis=1).toarray().ravel().max() * np.abs(x).max() + np.abs(b).max()
    return float(np.abs(r).max() / scale) if scale > 0 else float(np.abs(r).max())


def mixed_residual(mesh, mobility, mixed: MixedSolution, fbar) -> float:
    A, rhs = assemble_mixed(mesh, mobility, fbar)
    return _backward_error(A, np.r_[mixed.face_flux, mixed.cell_mean], rhs)


def primal_residual(mesh, mobility, primal: PrimalSolution, load, fbar) -> float:
    A, rhs, _ = assemble_primal(mesh, mobility, load, fbar)
    return _backward_error(A, primal.dofs, rhs)


def compare_mixed(mesh, a: MixedSolution, b: MixedSolution) -> tuple[float, float]:
    """Relative broken-L2 gaps in flux and cell means (absolute when b = 0)."""
    fn = broken_flux_norm(mesh, b.cell_flux)
    mn = cell_mean_norm(mesh, b.cell_mean)
    dflux = broken_flux_norm(mesh, a.cell_flux - b.cell_flux)
    dmean = cell_mean_norm(mesh, a.cell_mean - b.cell_mean)
    return (dflux / fn if fn > 0 else dflux, dmean / mn if mn > 0 else dmean)


def attach_reference(report: EquivalenceReport, mesh, candidate: MixedSolution, reference: MixedSolution):
    report.cross_scheme_flux_gap, report.cross_scheme_mean_gap = compare_mixed(mesh, candidate, reference)
    return report


# ----------------------------------------------------------------------------
# primal <-> mixed conversions


def primal_to_mixed(primal: PrimalSolution, mesh, mobility: Mobility, load: LoadField, reference=None):
    """sigma := b grad u cellwise, u := cell means; report certifies the mixed problem."""
    fbar = load_means(mesh, load)
    cell_flux = primal_flux(mesh, mobility, primal)
    mixed = mixed_from_cell_flux(mesh, cell_flux, primal.cell_dofs[:, 0])
    report = EquivalenceReport(
        hdiv_jump_max=hdiv_jump_max(mesh, cell_flux),
        potential_jump_max=potential_jump_max(mesh, primal.cell_dofs),
        divergence_residual_max=divergence_residual_max(mesh, cell_flux, fbar),
        constitutive_residual=constitutive_residual(mesh, mobility, cell_flux, primal.coeffs, primal.flavor),
        mixed_residual=mixed_residual(mesh, mobility, mixed, fbar),
        primal_residual=primal_residual(mesh, mobility, primal, load, fbar),
        flux_norm=broken_flux_norm(mesh, cell_flux),
        potential_norm=broken_potential_norm(mesh, mobility, primal.coeffs, primal.flavor),
        load_norm=load_norm(mesh, load),
    )
    if reference is not None:
        attach_reference(report, mesh, mixed, reference)
    return mixed, report


def mixed_to_primal(hybrid: HybridMixedSolution, mesh, mobility: Mobility, load: LoadField, reference=None):
    """Rebuild the enriched potential from (cell means, face multipliers)."""
    fbar = load_means(mesh, load)
    cell_dofs = np.column_stack([hybrid.cell_mean, hybrid.face_potential[mesh.cell_faces]])
    primal = primal_from_cell_dofs(mesh, mobility, cell_dofs)
    mixed = mixed_from_cell_flux(mesh, hybrid.cell_flux, hybrid.cell_mean)
    report = EquivalenceReport(
        hdiv_jump_max=hdiv_jump_max(mesh, hybrid.cell_flux),
        potential_jump_max=potential_jump_max(mesh, cell_dofs),
        divergence_residual_max=divergence_residual_max(mesh, hybrid.cell_flux, fbar),
        constitutive_residual=constitutive_residual(mesh, mobility, hybrid.cell_flux, primal.coeffs),
        mixed_residual=mixed_residual(mesh, mobility, mixed, fbar),
        primal_residual=primal_residual(mesh, mobility, primal, load, fbar),
        flux_norm=broken_flux_norm(mesh, hybrid.cell_flux),
        potential_norm=broken_potential_norm(mesh, mobility, primal.coeffs),
        load_norm=load_norm(mesh, load),
    )
    if reference is not None:
        attach_reference(report, mesh, mixed, reference)
    return primal, report


def audit_solution(mesh, dump: dict, mobility: Mobility, load: LoadField) -> EquivalenceReport:
    """Recompute every report field from the raw coefficients of a dump."""
    data = parse_dump(dump, mesh)
    fbar = load_means(mesh, load)
    if data["cell_flux"] is not None:
        mixed = mixed_from_cell_flux(mesh, data["cell_flux"], data["cell_mean"])
        mixed.face_flux = data["face_flux"]
    else:
        mixed = mixed_from_face_flux(mesh, data["face_flux"], data["cell_mean"])
    report = EquivalenceReport(
        hdiv_jump_max=hdiv_jump_max(mesh, mixed.cell_flux),
        divergence_residual_max=divergence_residual_max(mesh, mixed.cell_flux, fbar),
        mixed_residual=mixed_residual(mesh, mobility, mixed, fbar),
        flux_norm=broken_flux_norm(mesh, mixed.cell_flux),
        load_norm=load_norm(mesh, load),
    )
    coeffs = data["cell_coeffs"]
    if coeffs is not None:
        flavor = data["companion"]
        spaces = [local_space(mesh, mobility, K, flavor) for K in range(mesh.n_cells)]
        cell_dofs = np.array([s.dofs(c) for s, c in zip(spaces, coeffs)])
        report.potential_jump_max = potential_jump_max(mesh, cell_dofs)
        report.constitutive_residual = constitutive_residual(mesh, mobility, mixed.cell_flux, coeffs, flavor)
        report.potential_norm = broken_potential_norm(mesh, mobility, coeffs, flavor)
        if flavor == "weak":
            primal = primal_from_cell_dofs(mesh, mobility, cell_dofs)
            report.primal_residual = primal_residual(mesh, mobility, primal, load, fbar)
    return report


def audit_solution_files(mesh_file, solution_file, mobility_file, load: LoadField) -> EquivalenceReport:
    mesh = load_mesh(mesh_file)
    try:
        dump = json.loads(Path(solution_file).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{solution_file}: {exc}") from exc
    if mobility_file in (None, "identity"):
        mobility = Mobility.identity(mesh)
    else:
        mobility = load_mobility(mobility_file, mesh)
    return audit_solution(mesh, dump, mobility, load)
