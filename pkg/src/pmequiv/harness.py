"""Manufactured solutions, convergence studies and the verification matrix
behind the command-line interface."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .equivalence import (
    EquivalenceReport,
    attach_reference,
    broken_flux_norm,
    compare_mixed,
    divergence_residual_max,
    hdiv_jump_max,
    mixed_to_primal,
    potential_jump_max,
    primal_to_mixed,
)
from .equivalence import load_norm as _load_norm
from .local_spaces import (
    Mobility,
    flux_gram,
    flux_map_surjectivity_check,
    local_space,
    trace_matrix,
)
from .mesh import structured_triangulation, uniform_refine
from .polyquad import _subdivide, map_rule
from .schemes import (
    LoadField,
    MixedSolution,
    PrimalLayout,
    SchemeConfig,
    load_means,
    mixed_from_cell_flux,
    primal_from_cell_dofs,
    solve_condensed,
    solve_hybrid_mixed,
    solve_hybrid_primal,
    solve_mixed,
    solve_primal,
    solve_projection,
)

SCHEMES = ("primal", "mixed", "hybrid-primal", "hybrid-mixed", "condensed", "projection")

# pass/fail thresholds of the verification matrix (all relative)
TOLERANCES = {
    "flux_gap": 1e-10,
    "mean_gap": 1e-10,
    "hdiv_jump": 1e-11,
    "potential_jump": 1e-11,
    "divergence": 1e-12,
    "reconstruction": 1e-10,
    "companion_gap": 1e-10,
}


# ----------------------------------------------------------------------------
# manufactured solutions


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact potential on the unit square, vanishing on its boundary, with a
    uniform mobility; the load is f = -div(b grad u) in closed form."""

    name: str
    B: np.ndarray
    u: Callable = field(repr=False)
    grad: Callable = field(repr=False)
    hess: Callable = field(repr=False)

    def flux(self, pts):
        return self.grad(pts) @ self.B.T

    def f(self, pts):
        H = self.hess(pts)
        return -np.einsum("ij,qij->q", self.B, H)

    @property
    def load(self) -> LoadField:
        return LoadField.custom(f"mms-{self.name}", self.f)


def _sinsin(B):
    pi = math.pi

    def u(x):
        return np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def grad(x):
        sx, sy = np.sin(pi * x[:, 0]), np.sin(pi * x[:, 1])
        cx, cy = np.cos(pi * x[:, 0]), np.cos(pi * x[:, 1])
        return pi * np.column_stack([cx * sy, sx * cy])

    def hess(x):
        ss = np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])
        cc = np.cos(pi * x[:, 0]) * np.cos(pi * x[:, 1])
        return pi**2 * np.stack([np.column_stack([-ss, cc]), np.column_stack([cc, -ss])], axis=1)

    return ManufacturedCase("sinsin", B, u, grad, hess)


def _quadratic(B):
    def u(x):
        return x[:, 0] * (1 - x[:, 0]) * x[:, 1] * (1 - x[:, 1])

    def grad(x):
        X, Y = x[:, 0], x[:, 1]
        return np.column_stack([(1 - 2 * X) * Y * (1 - Y), X * (1 - X) * (1 - 2 * Y)])

    def hess(x):
        X, Y = x[:, 0], x[:, 1]
        hxy = (1 - 2 * X) * (1 - 2 * Y)
        return np.stack(
            [np.column_stack([-2 * Y * (1 - Y), hxy]), np.column_stack([hxy, -2 * X * (1 - X)])], axis=1
        )

    return ManufacturedCase("quadratic", B, u, grad, hess)


def _zero(B):
    return ManufacturedCase(
        "zero",
        B,
        lambda x: np.zeros(len(x)),
        lambda x: np.zeros((len(x), 2)),
        lambda x: np.zeros((len(x), 2, 2)),
    )


def manufactured_case(name: str, B=None) -> ManufacturedCase:
    B = np.eye(2) if B is None else np.asarray(B, dtype=float)
    builders = {"sinsin": _sinsin, "quadratic": _quadratic, "zero": _zero}
    if name not in builders:
        raise ValueError(f"unknown manufactured case {name!r}")
    return builders[name](B)


# ----------------------------------------------------------------------------
# running schemes


def potential_from_mixed(mesh, mobility, mixed: MixedSolution):
    """Recover the enriched potential whose weighted gradient is sigma.

    On each cell the face means mu solve
    sum_F |F| (tau.n_{K,F}) mu_F = (b^{-1} sigma, tau)_K + (u_K, div tau)_K
    for every tau in RT1(K).
    """
    d = mesh.dim
    dofs = np.empty((mesh.n_cells, d + 2))
    for K in range(mesh.n_cells):
        areas = mesh.face_areas[mesh.cell_faces[K]]
        rhs = flux_gram(mesh, mobility, K) @ mixed.cell_flux[K]
        rhs[d] += mixed.cell_mean[K] * d * mesh.volumes[K]
        mu = np.linalg.solve(trace_matrix(mesh, K).T * areas, rhs)
        dofs[K] = np.r_[mixed.cell_mean[K], mu]
    return primal_from_cell_dofs(mesh, mobility, dofs)


def run_scheme(scheme: str, mesh, mobility: Mobility, config: SchemeConfig):
    """Solve with any scheme; returns (MixedSolution, potential coeffs, companion)."""
    if scheme == "primal":
        p = solve_primal(mesh, mobility, config)
        mixed, _ = primal_to_mixed(p, mesh, mobility, config.load)
        return mixed, p.coeffs, "weak"
    if scheme == "mixed":
        mixed = solve_mixed(mesh, mobility, config)
        return mixed, None, "weak"
    if scheme == "hybrid-primal":
        hp = solve_hybrid_primal(mesh, mobility, config)
        p = primal_from_cell_dofs(mesh, mobility, hp.cell_dofs)
        mixed, _ = primal_to_mixed(p, mesh, mobility, config.load)
        return mixed, hp.coeffs, "weak"
    if scheme == "hybrid-mixed":
        hm = solve_hybrid_mixed(mesh, mobility, config)
        p, _ = mixed_to_primal(hm, mesh, mobility, config.load)
        return mixed_from_cell_flux(mesh, hm.cell_flux, hm.cell_mean), p.coeffs, "weak"
    if scheme == "condensed":
        p, mixed = solve_condensed(mesh, mobility, config)
        return mixed, p.coeffs, "weak"
    if scheme == "projection":
        mixed, rec = solve_projection(mesh, mobility, config, "strong")
        return mixed, rec.coeffs, "strong"
    raise ValueError(f"unknown scheme {scheme!r}")


# ----------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceTable:
    case: str
    scheme: str
    levels: list = field(default_factory=list)  # dict rows

    def eoc(self, key: str) -> list:
        return [row.get(f"eoc_{key}") for row in self.levels]

    def to_dict(self) -> dict:
        return {"case": self.case, "scheme": self.scheme, "levels": self.levels}


def _composite_points(mesh, K, levels=1, degree=6):
    pieces = [mesh.cell_vertices(K)]
    for _ in range(levels):
        pieces = [q for p in pieces for q in _subdivide(p)]
    rules = [map_rule(p, degree) for p in pieces]
    return np.vstack([r[0] for r in rules]), np.concatenate([r[1] for r in rules])


def solution_errors(mesh, mobility, case: ManufacturedCase, mixed: MixedSolution, primal) -> dict:
    flux_sq = mean_sq = pot_sq = 0.0
    for K in range(mesh.n_cells):
        pts, wts = _composite_points(mesh, K)
        tau = mixed.cell_flux[K]
        sig_h = tau[:-1] + tau[-1] * (pts - mesh.barycenters[K])
        diff = sig_h - case.flux(pts)
        flux_sq += wts @ np.einsum("qi,qi->q", diff, diff)
        pi0u = (wts @ case.u(pts)) / mesh.volumes[K]
        mean_sq += mesh.volumes[K] * (mixed.cell_mean[K] - pi0u) ** 2
        uh = local_space(mesh, mobility, K).evaluate(primal.coeffs[K], pts)
        pot_sq += wts @ (uh - case.u(pts)) ** 2
    return {
        "flux_error": math.sqrt(flux_sq),
        "mean_error": math.sqrt(mean_sq),
        "potential_error": math.sqrt(pot_sq),
    }


def run_convergence(case: ManufacturedCase, scheme: str, levels: int = 4, n0: int = 4, config=None) -> ConvergenceTable:
    """Solve on ``levels`` nested meshes: structured(n0) refined uniformly."""
    if levels < 3:
        raise ValueError("at least 3 levels are required")
    config = config or SchemeConfig(case.load)
    config = SchemeConfig(case.load, config.solver, config.tol, config.maxit)
    table = ConvergenceTable(case.name, scheme)
    mesh = structured_triangulation(n0)
    prev = None
    for lev in range(levels):
        if lev:
            mesh = uniform_refine(mesh)
        mob = Mobility.uniform(mesh, case.B)
        mixed, _, _ = run_scheme(scheme, mesh, mob, config)
        primal = potential_from_mixed(mesh, mob, mixed)
        row = {"n_cells": mesh.n_cells, "h_max": mesh.h_max}
        row.update(solution_errors(mesh, mob, case, mixed, primal))
        if prev is not None:
            ratio = prev["h_max"] / row["h_max"]
            for key in ("flux", "mean", "potential"):
                e0, e1 = prev[f"{key}_error"], row[f"{key}_error"]
                row[f"eoc_{key}"] = (
                    math.log(e0 / e1) / math.log(ratio) if e0 > 0 and e1 > 0 else None
                )
        table.levels.append(row)
        prev = row
    return table


# ----------------------------------------------------------------------------
# verification matrix


def verification_case(mesh, mobility: Mobility, load: LoadField, corrupt: float = 0.0) -> dict:
    """Run every scheme on one (mesh, mobility, load) and collect reports.

    ``corrupt`` perturbs one interior face DoF of the primal solution before
    it is converted, which must be caught by the H(div) jump detector.
    """
    config = SchemeConfig(load)
    fbar = load_means(mesh, load)
    mixed = solve_mixed(mesh, mobility, config)
    primal = solve_primal(mesh, mobility, config)
    if corrupt:
        x = primal.dofs.copy()
        x[mesh.n_cells] += corrupt
        primal = primal_from_cell_dofs(mesh, mobility, PrimalLayout(mesh).scatter(mesh, x))
    reports: dict[str, EquivalenceReport] = {}
    _, reports["primal_to_mixed"] = primal_to_mixed(primal, mesh, mobility, load, reference=mixed)
    hm = solve_hybrid_mixed(mesh, mobility, config)
    hm_primal, reports["mixed_to_primal"] = mixed_to_primal(hm, mesh, mobility, load, reference=mixed)

    cp, cm = solve_condensed(mesh, mobility, config)
    reports["condensed"] = _flux_report(mesh, cm, fbar, mixed)
    reports["condensed"].potential_jump_max = potential_jump_max(mesh, cp.cell_dofs)

    hp = solve_hybrid_primal(mesh, mobility, config)
    hp_p = primal_from_cell_dofs(mesh, mobility, hp.cell_dofs)
    _, reports["hybrid_primal"] = primal_to_mixed(hp_p, mesh, mobility, load, reference=mixed)

    extra = {
        "condensed_potential_gap": _coeff_gap(cp.coeffs, primal.coeffs),
        "hybrid_primal_potential_gap": _coeff_gap(hp.coeffs, primal.coeffs),
        "hybrid_mixed_potential_gap": _coeff_gap(hm_primal.coeffs, primal.coeffs),
    }
    if mesh.dim == 2:
        ps, rec = solve_projection(mesh, mobility, config, "strong")
        pw, _ = solve_projection(mesh, mobility, config, "weak")
        reports["projection_strong"] = _flux_report(mesh, ps, fbar, mixed)
        reports["projection_strong"].potential_jump_max = potential_jump_max(mesh, rec.cell_dofs)
        extra["companion_flux_gap"], extra["companion_mean_gap"] = compare_mixed(mesh, ps, pw)
        extra["companion_potential_distance"] = _potential_distance(mesh, mobility, primal.coeffs, rec.coeffs)
    surj = [flux_map_surjectivity_check(mesh, K) for K in range(mesh.n_cells)]
    extra["flux_map_full_rank"] = all(s["rank"] == mesh.dim + 1 for s in surj)
    extra["flux_map_right_inverse_max"] = max(s["right_inverse_norm"] for s in surj)
    return {"reports": reports, "extra": extra}


def _flux_report(mesh, mixed: MixedSolution, fbar, reference) -> EquivalenceReport:
    report = EquivalenceReport(
        hdiv_jump_max=hdiv_jump_max(mesh, mixed.cell_flux),
        divergence_residual_max=divergence_residual_max(mesh, mixed.cell_flux, fbar),
        flux_norm=broken_flux_norm(mesh, mixed.cell_flux),
    )
    return attach_reference(report, mesh, mixed, reference)


def _coeff_gap(a, b) -> float:
    scale = np.abs(b).max()
    gap = np.abs(np.asarray(a) - np.asarray(b)).max()
    return float(gap / scale) if scale > 0 else float(gap)


def _potential_distance(mesh, mobility, weak_coeffs, strong_coeffs) -> float:
    total = 0.0
    for K in range(mesh.n_cells):
        pts, wts = _composite_points(mesh, K, levels=0)
        uw = local_space(mesh, mobility, K, "weak").evaluate(weak_coeffs[K], pts)
        us = local_space(mesh, mobility, K, "strong").evaluate(strong_coeffs[K], pts)
        total += wts @ (uw - us) ** 2
    return math.sqrt(total)


def check_verification(result: dict, load_norm: float) -> dict:
    """Pass/fail per check; all thresholds relative to problem norms."""
    tol = TOLERANCES
    checks = {}
    for name, rep in result["reports"].items():
        fs = rep.flux_norm
        checks[f"{name}.flux_gap"] = rep.cross_scheme_flux_gap <= tol["flux_gap"]
        checks[f"{name}.mean_gap"] = rep.cross_scheme_mean_gap <= tol["mean_gap"]
        checks[f"{name}.hdiv_jump"] = rep.hdiv_jump_max <= tol["hdiv_jump"] * fs
        checks[f"{name}.divergence"] = rep.divergence_residual_max <= tol["divergence"] * load_norm
        if rep.potential_norm:
            checks[f"{name}.potential_jump"] = rep.potential_jump_max <= tol["potential_jump"] * rep.potential_norm
    extra = result["extra"]
    for key in ("condensed_potential_gap", "hybrid_primal_potential_gap", "hybrid_mixed_potential_gap"):
        checks[key] = extra[key] <= tol["reconstruction"]
    for key in ("companion_flux_gap", "companion_mean_gap"):
        if key in extra:
            checks[key] = extra[key] <= tol["companion_gap"]
    checks["flux_map_full_rank"] = bool(extra["flux_map_full_rank"])
    return checks


def verify(mesh, mobility: Mobility, load: LoadField, corrupt: float = 0.0) -> dict:
    """Full verification matrix on one case; ``passed`` is the overall verdict."""
    result = verification_case(mesh, mobility, load, corrupt)
    checks = check_verification(result, _load_norm(mesh, load))
    return {
        "passed": all(checks.values()),
        "checks": checks,
        "reports": {k: v.to_dict() for k, v in result["reports"].items()},
        "extra": result["extra"],
        "tolerances": dict(TOLERANCES),
    }
