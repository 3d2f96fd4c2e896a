"""Global assembly and solution of the four discrete formulations, the
statically condensed Crouzeix-Raviart path, and the projection method.

All problems carry homogeneous Dirichlet conditions.  Global flux DoFs are
face normal fluxes measured against the face normal ``n_F``; potential face
DoFs are face means, fixed to zero on boundary faces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import (
    DimensionMismatch,
    SchemaError,
    SingularSystem,
    SolverFailure,
    UnsupportedCompanion,
)
from .local_spaces import (
    Mobility,
    eta,
    flux_gram,
    local_space,
    normal_traces,
    projected_gradient_from_dofs,
    trace_matrix,
)
from .polyquad import cell_mean as _cell_average

DENSE_LIMIT = 4000


# ----------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class LoadField:
    """Scalar load f evaluated pointwise at (nq, d) arrays of points."""

    kind: str
    params: tuple = ()
    func: Callable | None = field(default=None, compare=False, repr=False)

    def __call__(self, pts):
        x = np.atleast_2d(pts)
        if self.kind == "constant":
            return np.full(len(x), float(self.params[0]))
        if self.kind == "sinsin":
            return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
        if self.kind == "linear":
            *a, b = self.params
            return x @ np.asarray(a, dtype=float) + b
        if self.func is not None:
            return self.func(x)
        raise ValueError(f"unknown load {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == "constant":
            return f"constant:{self.params[0]:g}"
        if self.kind == "linear":
            return "linear:" + ",".join(f"{p:g}" for p in self.params)
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "LoadField":
        """Parse ``constant:C``, ``sinsin`` or ``linear:a1,...,ad,b``."""
        kind, _, rest = text.partition(":")
        try:
            if kind == "constant":
                return cls("constant", (float(rest),))
            if kind == "sinsin" and not rest:
                return cls("sinsin")
            if kind == "linear":
                vals = tuple(float(v) for v in rest.split(","))
                if len(vals) < 2:
                    raise ValueError
                return cls("linear", vals)
        except ValueError:
            pass
        raise ValueError(f"cannot parse load {text!r}")

    @classmethod
    def custom(cls, name: str, func: Callable) -> "LoadField":
        return cls(name, (), func)


@dataclass(frozen=True)
class SchemeConfig:
    load: LoadField = LoadField("constant", (1.0,))
    solver: str = "direct"  # "direct" or "cg"
    tol: float = 1e-13
    maxit: int = 20000

    def __post_init__(self):
        if self.solver not in ("direct", "cg"):
            raise ValueError(f"unknown solver {self.solver!r}")


def load_means(mesh, load: LoadField) -> np.ndarray:
    """pi0_K f for every cell."""
    return np.array([_cell_average(mesh, K, load) for K in range(mesh.n_cells)])


# ----------------------------------------------------------------------------
# solution records


@dataclass
class PrimalSolution:
    """Cellwise potentials in the enriched (or companion) space."""

    dofs: np.ndarray  # global: cell means then interior face means
    cell_dofs: np.ndarray  # (nc, d+2): mean over K, then local face means
    coeffs: np.ndarray  # (nc, d+2) potential coefficients
    flavor: str = "weak"


@dataclass
class MixedSolution:
    face_flux: np.ndarray  # (nf,) sigma . n_F
    cell_flux: np.ndarray  # (nc, d+1) RT1 coefficients (a, r)
    cell_mean: np.ndarray  # (nc,)


@dataclass
class HybridPrimalSolution:
    cell_dofs: np.ndarray  # (nc, d+2)
    coeffs: np.ndarray  # (nc, d+2)
    multipliers: np.ndarray  # (nc, d+1): sigma_{dK} on local faces, outward normals
    face_multiplier: np.ndarray  # (nf,) against n_F


@dataclass
class HybridMixedSolution:
    cell_flux: np.ndarray  # (nc, d+1) broken RT1 coefficients
    cell_mean: np.ndarray  # (nc,)
    face_potential: np.ndarray  # (nf,) u_dK, zero on boundary faces


# ----------------------------------------------------------------------------
# helpers


class PrimalLayout:
    """Global numbering: cell means first, then interior face means."""

    def __init__(self, mesh):
        self.n_cells = mesh.n_cells
        self.face_index = np.full(mesh.n_faces, -1)
        interior = mesh.interior_faces
        self.face_index[interior] = mesh.n_cells + np.arange(len(interior))
        self.size = mesh.n_cells + len(interior)

    def cell_map(self, mesh, K: int) -> np.ndarray:
        """Global index per local DoF of K (-1 for boundary faces)."""
        return np.r_[K, self.face_index[mesh.cell_faces[K]]]

    def scatter(self, mesh, x: np.ndarray) -> np.ndarray:
        """Local DoF table (nc, d+2) from a global vector."""
        out = np.zeros((mesh.n_cells, mesh.dim + 2))
        for K in range(mesh.n_cells):
            idx = self.cell_map(mesh, K)
            out[K, idx >= 0] = x[idx[idx >= 0]]
        return out


def _assemble(mesh, layout, local_mats):
    rows, cols, vals = [], [], []
    for K, A in enumerate(local_mats):
        idx = layout.cell_map(mesh, K)
        keep = idx >= 0
        g = idx[keep]
        rows.append(np.repeat(g, len(g)))
        cols.append(np.tile(g, len(g)))
        vals.append(A[np.ix_(keep, keep)].ravel())
    return sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(layout.size, layout.size),
    )


def _solve(A, b, config: SchemeConfig, spd: bool):
    if config.solver == "cg" and spd:
        x, info = spla.cg(sps.csr_matrix(A), b, rtol=config.tol, atol=0.0, maxiter=config.maxit)
        if info != 0:
            raise SolverFailure(f"CG did not converge (info={info})")
        return x
    if A.shape[0] == 0:
        return np.zeros(0)
    try:
        if A.shape[0] <= DENSE_LIMIT:
            Ad = A.toarray() if sps.issparse(A) else np.asarray(A)
            return sla.solve(Ad, b, assume_a="pos" if spd else "gen")
        return spla.splu(sps.csc_matrix(A)).solve(b)
    except (sla.LinAlgError, RuntimeError) as exc:
        if spd:
            raise SolverFailure(str(exc)) from exc
        raise SingularSystem(str(exc)) from exc


def _face_flux_from_cells(mesh, cell_flux) -> np.ndarray:
    """sigma . n_F from the lowest-indexed incident cell."""
    phi = np.empty(mesh.n_faces)
    for F, cells in enumerate(mesh.face_cells):
        K = cells[0]
        i = mesh.local_face_index(K, F)
        phi[F] = mesh.eps[K, i] * normal_traces(mesh, K, cell_flux[K])[i]
    return phi


def _cell_flux_from_faces(mesh, face_flux) -> np.ndarray:
    out = np.empty((mesh.n_cells, mesh.dim + 1))
    for K in range(mesh.n_cells):
        t = mesh.eps[K] * face_flux[mesh.cell_faces[K]]
        out[K] = np.linalg.solve(trace_matrix(mesh, K), t)
    return out


def mixed_from_cell_flux(mesh, cell_flux, cell_mean) -> MixedSolution:
    cell_flux = np.asarray(cell_flux, dtype=float)
    return MixedSolution(_face_flux_from_cells(mesh, cell_flux), cell_flux, np.asarray(cell_mean, dtype=float))


def mixed_from_face_flux(mesh, face_flux, cell_mean) -> MixedSolution:
    face_flux = np.asarray(face_flux, dtype=float)
    return MixedSolution(face_flux, _cell_flux_from_faces(mesh, face_flux), np.asarray(cell_mean, dtype=float))


def primal_flux(mesh, mobility, primal: PrimalSolution) -> np.ndarray:
    """Cellwise RT1 coefficients of the projected gradient of a primal solution."""
    return np.array(
        [
            projected_gradient_from_dofs(mesh, mobility, K, d[0], d[1:])
            for K, d in enumerate(primal.cell_dofs)
        ]
    )


# ----------------------------------------------------------------------------
# primal


def local_primal_matrix(mesh, mobility: Mobility, K: int) -> np.ndarray:
    """(b grad phi_i, grad phi_j)_K for the DoF basis of the enriched space."""
    space = local_space(mesh, mobility, K, "weak")
    d = mesh.dim
    S = np.zeros((d + 2, d + 2))
    S[1:-1, 1:-1] = mesh.volumes[K] * mobility[K]
    S[-1, -1] = eta(mesh, mobility, K)
    Phi = np.linalg.inv(space.dof_matrix)
    return Phi.T @ S @ Phi


def local_projection_matrix(mesh, mobility: Mobility, K: int) -> np.ndarray:
    """(b^{-1} P(b grad phi_i), P(b grad phi_j))_K from DoFs alone."""
    d = mesh.dim
    I = np.eye(d + 2)
    C = np.column_stack(
        [projected_gradient_from_dofs(mesh, mobility, K, e[0], e[1:]) for e in I]
    )
    return C.T @ flux_gram(mesh, mobility, K) @ C


def _primal_rhs(mesh, layout, fbar):
    rhs = np.zeros(layout.size)
    rhs[: mesh.n_cells] = mesh.volumes * fbar
    return rhs


def assemble_primal(mesh, mobility: Mobility, load: LoadField, fbar=None):
    """Global matrix, right-hand side and layout of the primal problem."""
    layout = PrimalLayout(mesh)
    A = _assemble(mesh, layout, [local_primal_matrix(mesh, mobility, K) for K in range(mesh.n_cells)])
    if fbar is None:
        fbar = load_means(mesh, load)
    return A, _primal_rhs(mesh, layout, fbar), layout


def _primal_from_global(mesh, mobility, layout, x, flavor="weak") -> PrimalSolution:
    cell_dofs = layout.scatter(mesh, x)
    coeffs = np.array(
        [local_space(mesh, mobility, K, flavor).from_dofs(d[0], d[1:]) for K, d in enumerate(cell_dofs)]
    )
    return PrimalSolution(x, cell_dofs, coeffs, flavor)


def primal_from_cell_dofs(mesh, mobility, cell_dofs, flavor="weak") -> PrimalSolution:
    """Primal record from a (nc, d+2) DoF table (global vector read off it)."""
    layout = PrimalLayout(mesh)
    cell_dofs = np.asarray(cell_dofs, dtype=float)
    x = np.zeros(layout.size)
    for K in range(mesh.n_cells):
        idx = layout.cell_map(mesh, K)
        x[idx[idx >= 0]] = cell_dofs[K, idx >= 0]
    coeffs = np.array(
        [local_space(mesh, mobility, K, flavor).from_dofs(d[0], d[1:]) for K, d in enumerate(cell_dofs)]
    )
    return PrimalSolution(x, cell_dofs, coeffs, flavor)


def solve_primal(mesh, mobility: Mobility, config: SchemeConfig) -> PrimalSolution:
    A, rhs, layout = assemble_primal(mesh, mobility, config.load)
    x = _solve(A, rhs, config, spd=True)
    return _primal_from_global(mesh, mobility, layout, x)


# ----------------------------------------------------------------------------
# mixed


def _local_flux_mass(mesh, mobility, K):
    """Weighted mass matrix in the basis of outward face fluxes of K."""
    Tinv = np.linalg.inv(trace_matrix(mesh, K))
    return Tinv.T @ flux_gram(mesh, mobility, K) @ Tinv


def assemble_mixed(mesh, mobility: Mobility, fbar):
    nf, nc = mesh.n_faces, mesh.n_cells
    rows, cols, vals = [], [], []
    for K in range(nc):
        Fs = mesh.cell_faces[K]
        E = mesh.eps[K]
        M = _local_flux_mass(mesh, mobility, K) * np.outer(E, E)
        rows.append(np.repeat(Fs, len(Fs)))
        cols.append(np.tile(Fs, len(Fs)))
        vals.append(M.ravel())
        Bk = E * mesh.face_areas[Fs]
        rows += [np.full(len(Fs), nf + K), Fs]
        cols += [Fs, np.full(len(Fs), nf + K)]
        vals += [Bk, Bk]
    A = sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nf + nc, nf + nc),
    )
    rhs = np.r_[np.zeros(nf), -mesh.volumes * fbar]
    return A, rhs


def solve_mixed(mesh, mobility: Mobility, config: SchemeConfig) -> MixedSolution:
    fbar = load_means(mesh, config.load)
    A, rhs = assemble_mixed(mesh, mobility, fbar)
    x = _solve(A, rhs, config, spd=False)
    return mixed_from_face_flux(mesh, x[: mesh.n_faces], x[mesh.n_faces :])


# ----------------------------------------------------------------------------
# hybridized primal


def solve_hybrid_primal(mesh, mobility: Mobility, config: SchemeConfig) -> HybridPrimalSolution:
    """Broken enriched potentials coupled by one face multiplier per face.

    The cell-mean DoF of every cell is eliminated locally; the remaining
    (local face traces, multipliers) saddle-point system is solved directly.
    """
    d, nc, nf = mesh.dim, mesh.n_cells, mesh.n_faces
    fbar = load_means(mesh, config.load)
    nl = d + 1
    size = nc * nl + nf
    rows, cols, vals = [], [], []
    rhs = np.zeros(size)
    reduced = []
    for K in range(nc):
        A = local_primal_matrix(mesh, mobility, K)
        F0 = mesh.volumes[K] * fbar[K]
        a00, a0f, aff = A[0, 0], A[0, 1:], A[1:, 1:]
        S = aff - np.outer(a0f, a0f) / a00
        g = -a0f * F0 / a00
        reduced.append((a00, a0f, F0))
        idx = K * nl + np.arange(nl)
        rows.append(np.repeat(idx, nl))
        cols.append(np.tile(idx, nl))
        vals.append(S.ravel())
        rhs[idx] = g
        Fs = mesh.cell_faces[K]
        c = -mesh.face_areas[Fs] * mesh.eps[K]
        rows += [idx, nc * nl + Fs]
        cols += [nc * nl + Fs, idx]
        vals += [c, c]
    M = sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )
    x = _solve(M, rhs, SchemeConfig(config.load, "direct"), spd=False)
    traces = x[: nc * nl].reshape(nc, nl)
    lam = x[nc * nl :]
    cell_dofs = np.empty((nc, d + 2))
    coeffs = np.empty((nc, d + 2))
    for K, (a00, a0f, F0) in enumerate(reduced):
        mean = (F0 - a0f @ traces[K]) / a00
        cell_dofs[K] = np.r_[mean, traces[K]]
        coeffs[K] = local_space(mesh, mobility, K).from_dofs(mean, traces[K])
    multipliers = mesh.eps * lam[mesh.cell_faces]
    return HybridPrimalSolution(cell_dofs, coeffs, multipliers, lam)


# ----------------------------------------------------------------------------
# hybridized mixed


def solve_hybrid_mixed(mesh, mobility: Mobility, config: SchemeConfig) -> HybridMixedSolution:
    """Broken RT1 fluxes and cell means eliminated per cell; interface
    multipliers solve an SPD system."""
    d, nc, nf = mesh.dim, mesh.n_cells, mesh.n_faces
    fbar = load_means(mesh, config.load)
    interior = mesh.interior_faces
    gidx = np.full(nf, -1)
    gidx[interior] = np.arange(len(interior))
    ni = len(interior)
    local = []
    rows, cols, vals = [], [], []
    rhs = np.zeros(ni)
    for K in range(nc):
        Fs = mesh.cell_faces[K]
        areas = mesh.face_areas[Fs]
        L = np.zeros((d + 2, d + 2))
        L[: d + 1, : d + 1] = _local_flux_mass(mesh, mobility, K)
        L[d + 1, : d + 1] = L[: d + 1, d + 1] = areas
        Linv = np.linalg.inv(L)
        X = Linv[: d + 1, : d + 1] * areas  # t = X mu_loc + y
        y = Linv[: d + 1, d + 1] * (-mesh.volumes[K] * fbar[K])
        local.append((Linv, areas))
        g = gidx[Fs]
        keep = g >= 0
        H = (areas[:, None] * X)[np.ix_(keep, keep)]
        rows.append(np.repeat(g[keep], keep.sum()))
        cols.append(np.tile(g[keep], keep.sum()))
        vals.append(H.ravel())
        np.add.at(rhs, g[keep], -(areas * y)[keep])
    H = sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(ni, ni)
    )
    mu = np.zeros(nf)
    mu[interior] = _solve(H, rhs, config, spd=True)
    cell_flux = np.empty((nc, d + 1))
    cell_mean = np.empty(nc)
    for K, (Linv, areas) in enumerate(local):
        sol = Linv @ np.r_[areas * mu[mesh.cell_faces[K]], -mesh.volumes[K] * fbar[K]]
        cell_flux[K] = np.linalg.solve(trace_matrix(mesh, K), sol[: d + 1])
        cell_mean[K] = sol[d + 1]
    return HybridMixedSolution(cell_flux, cell_mean, mu)


# ----------------------------------------------------------------------------
# static condensation


def solve_condensed(mesh, mobility: Mobility, config: SchemeConfig):
    """Crouzeix-Raviart face system, then local reconstruction of the
    enriched potential, its cell means and its flux."""
    d, nc = mesh.dim, mesh.n_cells
    fbar = load_means(mesh, config.load)
    interior = mesh.interior_faces
    gidx = np.full(mesh.n_faces, -1)
    gidx[interior] = np.arange(len(interior))
    rows, cols, vals = [], [], []
    rhs = np.zeros(len(interior))
    for K in range(nc):
        Fs = mesh.cell_faces[K]
        G = (mesh.face_areas[Fs] * mesh.normals[K].T) / mesh.volumes[K]
        A = mesh.volumes[K] * G.T @ mobility[K] @ G
        r = fbar[K] * mesh.face_areas[Fs] * mesh.dists[K] / d
        g = gidx[Fs]
        keep = g >= 0
        rows.append(np.repeat(g[keep], keep.sum()))
        cols.append(np.tile(g[keep], keep.sum()))
        vals.append(A[np.ix_(keep, keep)].ravel())
        np.add.at(rhs, g[keep], r[keep])
    A = sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(interior), len(interior)),
    )
    face_vals = np.zeros(mesh.n_faces)
    face_vals[interior] = _solve(A, rhs, config, spd=True)

    cell_dofs = np.empty((nc, d + 2))
    coeffs = np.empty((nc, d + 2))
    cell_flux = np.empty((nc, d + 1))
    for K in range(nc):
        Fs = mesh.cell_faces[K]
        v = face_vals[Fs]
        areas = mesh.face_areas[Fs]
        vol = mesh.volumes[K]
        grad_cr = (areas * v) @ mesh.normals[K] / vol
        mean_cr = (areas * mesh.dists[K]) @ v / (d * vol)
        eK = eta(mesh, mobility, K)
        mean = mean_cr + eK / (d**2 * vol) * fbar[K]
        cK = (2 + d) * eK / (2 * d * vol)
        coeffs[K] = np.r_[mean_cr + fbar[K] * cK / d, grad_cr, -fbar[K] / d]
        cell_flux[K] = np.r_[mobility[K] @ grad_cr, -fbar[K] / d]
        cell_dofs[K] = np.r_[mean, v]
    layout = PrimalLayout(mesh)
    x = np.zeros(layout.size)
    x[:nc] = cell_dofs[:, 0]
    x[nc:] = face_vals[interior]
    primal = PrimalSolution(x, cell_dofs, coeffs)
    return primal, mixed_from_cell_flux(mesh, cell_flux, cell_dofs[:, 0])


# ----------------------------------------------------------------------------
# projection method


@dataclass
class ProjectionRecord:
    dofs: np.ndarray  # global DoF vector of the companion solution
    cell_dofs: np.ndarray  # (nc, d+2)
    coeffs: np.ndarray  # (nc, d+2) companion coefficients of x~
    flavor: str
    matrix: sps.csr_matrix = field(repr=False)


def solve_projection(mesh, mobility: Mobility, config: SchemeConfig, companion: str = "strong"):
    """Projection method with a companion space used only through its DoFs.

    The bilinear form (b^{-1} P(b grad x), P(b grad v)) is assembled from
    DoF-only projected gradients; the companion enters through the
    bijectivity of its DoF map and the reconstruction of x~.
    """
    if companion not in ("weak", "strong"):
        raise UnsupportedCompanion(f"unknown companion flavor {companion!r}")
    if companion == "strong" and mesh.dim != 2:
        raise UnsupportedCompanion("strong bubble companion is only available in 2D")
    spaces = [local_space(mesh, mobility, K, companion) for K in range(mesh.n_cells)]
    layout = PrimalLayout(mesh)
    A = _assemble(mesh, layout, [local_projection_matrix(mesh, mobility, K) for K in range(mesh.n_cells)])
    fbar = load_means(mesh, config.load)
    x = _solve(A, _primal_rhs(mesh, layout, fbar), config, spd=True)
    cell_dofs = layout.scatter(mesh, x)
    coeffs = np.array([s.from_dofs(dd[0], dd[1:]) for s, dd in zip(spaces, cell_dofs)])
    cell_flux = np.array(
        [projected_gradient_from_dofs(mesh, mobility, K, dd[0], dd[1:]) for K, dd in enumerate(cell_dofs)]
    )
    record = ProjectionRecord(x, cell_dofs, coeffs, companion, A)
    return mixed_from_cell_flux(mesh, cell_flux, cell_dofs[:, 0]), record


def assemble_projection(mesh, mobility: Mobility) -> sps.csr_matrix:
    layout = PrimalLayout(mesh)
    return _assemble(mesh, layout, [local_projection_matrix(mesh, mobility, K) for K in range(mesh.n_cells)])


# ----------------------------------------------------------------------------
# dump format


def _floats(a):
    return [float(v) for v in np.ravel(a)]


def solution_dump(scheme: str, mesh, mixed: MixedSolution, coeffs=None, residuals=None, companion="weak") -> dict:
    """JSON-ready record of a solution (see README for the layout)."""
    out = {
        "scheme": scheme,
        "face_flux": _floats(mixed.face_flux),
        "cell_mean": _floats(mixed.cell_mean),
        "cell_coeffs": [] if coeffs is None else [_floats(c) for c in coeffs],
        "cell_flux": [_floats(c) for c in mixed.cell_flux],
        "companion": companion,
        "residuals": dict(residuals or {}),
    }
    return out


DUMP_REQUIRED = {"scheme", "face_flux", "cell_mean", "cell_coeffs", "residuals"}
DUMP_OPTIONAL = {"cell_flux", "companion"}


def parse_dump(data, mesh) -> dict:
    """Validate a solution dump against a mesh; returns numpy arrays."""
    if not isinstance(data, dict):
        raise SchemaError("solution file must contain a JSON object")
    missing = DUMP_REQUIRED - set(data)
    if missing:
        raise SchemaError(f"missing solution keys: {sorted(missing)}")
    unknown = set(data) - DUMP_REQUIRED - DUMP_OPTIONAL
    if unknown:
        raise SchemaError(f"unknown solution keys: {sorted(unknown)}")

    try:
        face_flux = np.asarray(data["face_flux"], dtype=float)
        cell_mean = np.asarray(data["cell_mean"], dtype=float)
        coeffs = np.asarray(data["cell_coeffs"], dtype=float)
        cell_flux = data.get("cell_flux")
        cell_flux = None if cell_flux in (None, []) else np.asarray(cell_flux, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"non-numeric solution data: {exc}") from exc
    d = mesh.dim
    if face_flux.shape != (mesh.n_faces,):
        raise DimensionMismatch(f"face_flux has shape {face_flux.shape}, mesh has {mesh.n_faces} faces")
    if cell_mean.shape != (mesh.n_cells,):
        raise DimensionMismatch(f"cell_mean has shape {cell_mean.shape}, mesh has {mesh.n_cells} cells")
    if coeffs.size and coeffs.shape != (mesh.n_cells, d + 2):
        raise DimensionMismatch(f"cell_coeffs has shape {coeffs.shape}")
    if cell_flux is not None and cell_flux.shape != (mesh.n_cells, d + 1):
        raise DimensionMismatch(f"cell_flux has shape {cell_flux.shape}")
    companion = data.get("companion", "weak")
    if companion not in ("weak", "strong"):
        raise SchemaError(f"unknown companion {companion!r}")
    return {
        "scheme": data["scheme"],
        "face_flux": face_flux,
        "cell_mean": cell_mean,
        "cell_coeffs": coeffs if coeffs.size else None,
        "cell_flux": cell_flux,
        "companion": companion,
    }
