"""Local potential and flux spaces on simplices for a cellwise-constant mobility.

Flux fields in the lowest-order Raviart-Thomas space RT1(K) are stored as
``(a_1, ..., a_d, r)`` and represent ``tau(x) = a + r (x - xbar_K)``.  The
constant block ``a`` is the vector value itself (it spans ``b_K P0(K)^d``
since ``b_K`` is invertible).

Potentials are stored as ``(c0, g_1, ..., g_d, cb)`` and represent
``v(x) = c0 + g . (x - xbar_K) + cb * bubble(x)``.  For the enriched space
the bubble is ``psi_K(x) = 1/2 b_K^{-1}(x - xbar_K).(x - xbar_K)``; for the
strong-bubble companion it is the raw barycentric product (2D only).

Potential DoFs are ``(mean over K, mean over local face 0, ..., face d)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    RankDeficient,
    SchemaError,
    SingularDoFMap,
    UnsupportedCompanion,
)
from .polyquad import MAX_DEGREE, cell_rule, face_rule

SYM_TOL = 1e-10
DET_TOL = 1e-14
FLUX_FLAG_THRESHOLD = 1e2


@dataclass(frozen=True, eq=False)
class Mobility:
    """One SPD tensor per cell, with global ellipticity bounds."""

    tensors: np.ndarray  # (nc, d, d)

    def __post_init__(self):
        T = np.asarray(self.tensors, dtype=float)
        if T.ndim != 3 or T.shape[1] != T.shape[2]:
            raise ValueError("mobility tensors must have shape (nc, d, d)")
        scale = np.abs(T).max(axis=(1, 2))
        asym = np.abs(T - T.transpose(0, 2, 1)).max(axis=(1, 2))
        if np.any(asym > SYM_TOL * scale):
            raise ValueError("mobility tensor not symmetric")
        T = (T + T.transpose(0, 2, 1)) / 2
        d = T.shape[1]
        eig = np.linalg.eigvalsh(T)
        dets = np.linalg.det(T)
        if np.any(eig[:, 0] <= 0) or np.any(dets < DET_TOL * np.linalg.norm(T, 2, axis=(1, 2)) ** d):
            raise ValueError("mobility tensor not positive definite")
        object.__setattr__(self, "tensors", T)
        object.__setattr__(self, "inverses", np.linalg.inv(T))
        object.__setattr__(self, "b_min", float(eig[:, 0].min()))
        object.__setattr__(self, "b_max", float(eig[:, -1].max()))

    @property
    def n_cells(self) -> int:
        return len(self.tensors)

    @property
    def dim(self) -> int:
        return self.tensors.shape[1]

    def __getitem__(self, K):
        return self.tensors[K]

    def inv(self, K) -> np.ndarray:
        return self.inverses[K]

    @classmethod
    def uniform(cls, mesh, B) -> "Mobility":
        B = np.asarray(B, dtype=float)
        return cls(np.broadcast_to(B, (mesh.n_cells, *B.shape)).copy())

    @classmethod
    def identity(cls, mesh) -> "Mobility":
        return cls.uniform(mesh, np.eye(mesh.dim))

    @classmethod
    def random(cls, mesh, rng, low=1.0, high=1e3) -> "Mobility":
        """Per-cell random SPD tensors with eigenvalues drawn in [low, high]."""
        d = mesh.dim
        T = np.empty((mesh.n_cells, d, d))
        for K in range(mesh.n_cells):
            Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
            lam = rng.uniform(low, high, size=d)
            T[K] = Q @ np.diag(lam) @ Q.T
        return cls(T)


def rotated_anisotropic(ratio: float = 1e3, degrees: float = 30.0) -> np.ndarray:
    """diag(1, ratio) rotated by the given angle (2D)."""
    t = np.deg2rad(degrees)
    R = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    return R @ np.diag([1.0, ratio]) @ R.T


def mobility_from_json(data, mesh) -> Mobility:
    if not isinstance(data, dict) or len(data) != 1 or not set(data) <= {"uniform", "per_cell"}:
        raise SchemaError('mobility must be {"uniform": M} or {"per_cell": [M, ...]}')
    try:
        if "uniform" in data:
            B = np.asarray(data["uniform"], dtype=float)
            if B.shape != (mesh.dim, mesh.dim):
                raise DimensionMismatch(f"uniform tensor has shape {B.shape}")
            return Mobility.uniform(mesh, B)
        T = np.asarray(data["per_cell"], dtype=float)
        if T.shape != (mesh.n_cells, mesh.dim, mesh.dim):
            raise DimensionMismatch(f"per_cell tensors have shape {T.shape}")
        return Mobility(T)
    except ValueError as exc:
        raise SchemaError(f"invalid mobility: {exc}") from exc


def load_mobility(path, mesh) -> Mobility:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    return mobility_from_json(data, mesh)


# ----------------------------------------------------------------------------
# cell geometry helpers


def second_moment(mesh, K: int) -> np.ndarray:
    """int_K (x - xbar)(x - xbar)^T, closed form for simplices."""
    P = mesh.cell_vertices(K) - mesh.barycenters[K]
    d = mesh.dim
    return mesh.volumes[K] / ((d + 1) * (d + 2)) * P.T @ P


def eta(mesh, mobility: Mobility, K: int) -> float:
    """int_K |b_K^{-1/2}(x - xbar_K)|^2."""
    return float(np.trace(mobility.inv(K) @ second_moment(mesh, K)))


def trace_matrix(mesh, K: int) -> np.ndarray:
    """Normal trace of each RT1 basis field (rows: local faces)."""
    return np.column_stack([mesh.normals[K], mesh.dists[K]])


def normal_traces(mesh, K: int, tau) -> np.ndarray:
    """Constant values of tau . n_{K,F} on the local faces of K."""
    return trace_matrix(mesh, K) @ np.asarray(tau, dtype=float)


def discrete_divergence(mesh, K: int, tau) -> float:
    """(1/|K|) sum_F |F| tau.n_{K,F}; equals the pointwise divergence on RT1."""
    F = mesh.cell_faces[K]
    return float(mesh.face_areas[F] @ normal_traces(mesh, K, tau)) / mesh.volumes[K]


def flux_gram(mesh, mobility: Mobility, K: int) -> np.ndarray:
    """b^{-1}-weighted L2(K) Gram matrix of the RT1 basis (e_1..e_d, x - xbar)."""
    d = mesh.dim
    W = np.zeros((d + 1, d + 1))
    W[:d, :d] = mesh.volumes[K] * mobility.inv(K)
    W[d, d] = eta(mesh, mobility, K)
    return W


def flux_l2_gram(mesh, K: int) -> np.ndarray:
    d = mesh.dim
    W = np.zeros((d + 1, d + 1))
    W[:d, :d] = mesh.volumes[K] * np.eye(d)
    W[d, d] = np.trace(second_moment(mesh, K))
    return W


def eval_flux(mesh, K: int, tau, pts) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    return tau[:-1] + tau[-1] * (np.atleast_2d(pts) - mesh.barycenters[K])


# ----------------------------------------------------------------------------
# potential spaces


class LocalPotentialSpace:
    """P1(K) enriched with one bubble, together with its DoF map.

    ``flavor="weak"`` gives the bubble-enriched space whose mobility-weighted
    gradients are exactly RT1(K); ``flavor="strong"`` uses the cubic
    barycentric bubble (2D only) and serves as a companion space.
    """

    def __init__(self, mesh, mobility: Mobility, K: int, flavor: str = "weak"):
        if flavor not in ("weak", "strong"):
            raise UnsupportedCompanion(f"unknown companion flavor {flavor!r}")
        if flavor == "strong" and mesh.dim != 2:
            raise UnsupportedCompanion("strong bubble companion is only available in 2D")
        self.mesh = mesh
        self.cell = K
        self.flavor = flavor
        self.dim = mesh.dim
        self.xbar = mesh.barycenters[K]
        self.b = mobility[K]
        self.binv = mobility.inv(K)
        self._lam_grad = mesh.barycentric_gradients(K)
        self._P = mesh.cell_vertices(K)

        D = np.empty((self.dim + 2, self.dim + 2))
        pts, wts = cell_rule(mesh, K, MAX_DEGREE)
        D[0] = wts @ self.evaluate_basis(pts) / mesh.volumes[K]
        for i, F in enumerate(mesh.cell_faces[K]):
            pts, wts = face_rule(mesh, F, MAX_DEGREE)
            D[1 + i] = wts @ self.evaluate_basis(pts) / mesh.face_areas[F]
        self.dof_matrix = D
        self.condition_number = float(np.linalg.cond(self.scaled_dof_matrix()))
        if not np.isfinite(self.condition_number) or self.condition_number > 1e13:
            raise SingularDoFMap(
                f"DoF map of cell {K} ({flavor}) has condition number {self.condition_number:.3e}"
            )
        self._lu = sla.lu_factor(D)

    @property
    def dimension(self) -> int:
        return self.dim + 2

    def scaled_dof_matrix(self) -> np.ndarray:
        """DoF matrix in the size-normalised basis (1, y/h, bubble/bubble_scale)."""
        h = self.mesh.diameters[self.cell]
        bscale = h**2 / np.linalg.norm(self.b, 2) if self.flavor == "weak" else 1.0
        s = np.r_[1.0, np.full(self.dim, 1.0 / h), 1.0 / bscale]
        return self.dof_matrix * s

    def _bubble(self, pts):
        y = np.atleast_2d(pts) - self.xbar
        if self.flavor == "weak":
            return 0.5 * np.einsum("qi,ij,qj->q", y, self.binv, y)
        lam = self._barycentric(pts)
        return lam.prod(axis=1)

    def _bubble_grad(self, pts):
        y = np.atleast_2d(pts) - self.xbar
        if self.flavor == "weak":
            return y @ self.binv
        lam = self._barycentric(pts)
        G = self._lam_grad
        return (
            (lam[:, 1] * lam[:, 2])[:, None] * G[0]
            + (lam[:, 0] * lam[:, 2])[:, None] * G[1]
            + (lam[:, 0] * lam[:, 1])[:, None] * G[2]
        )

    def _barycentric(self, pts):
        x = np.atleast_2d(pts)
        lam_rest = (x - self._P[0]) @ self._lam_grad[1:].T
        return np.column_stack([1.0 - lam_rest.sum(axis=1), lam_rest])

    def evaluate_basis(self, pts) -> np.ndarray:
        y = np.atleast_2d(pts) - self.xbar
        return np.column_stack([np.ones(len(y)), y, self._bubble(pts)])

    def evaluate(self, coeffs, pts) -> np.ndarray:
        return self.evaluate_basis(pts) @ np.asarray(coeffs, dtype=float)

    def gradient(self, coeffs, pts) -> np.ndarray:
        c = np.asarray(coeffs, dtype=float)
        n = len(np.atleast_2d(pts))
        return np.broadcast_to(c[1:-1], (n, self.dim)) + c[-1] * self._bubble_grad(pts)

    def dofs(self, coeffs) -> np.ndarray:
        return self.dof_matrix @ np.asarray(coeffs, dtype=float)

    def from_dofs(self, cell_mean, face_means) -> np.ndarray:
        rhs = np.r_[cell_mean, np.asarray(face_means, dtype=float)]
        return sla.lu_solve(self._lu, rhs)

    def flux(self, coeffs) -> np.ndarray:
        """RT1 coefficients of b_K grad v (weak flavor only, where it is exact)."""
        if self.flavor != "weak":
            raise UnsupportedCompanion("b grad v leaves RT1(K) for the strong bubble")
        c = np.asarray(coeffs, dtype=float)
        return np.r_[self.b @ c[1:-1], c[-1]]


class CompanionSpace(LocalPotentialSpace):
    """Potential space used only through its DoFs in the projection method."""


@lru_cache(maxsize=65536)
def local_space(mesh, mobility: Mobility, K: int, flavor: str = "weak") -> LocalPotentialSpace:
    cls = LocalPotentialSpace if flavor == "weak" else CompanionSpace
    return cls(mesh, mobility, K, flavor)


def potential_from_dofs(mesh, mobility, K, cell_mean, face_means, flavor="weak") -> np.ndarray:
    return local_space(mesh, mobility, K, flavor).from_dofs(cell_mean, face_means)


def ibp_pairing(space: LocalPotentialSpace, coeffs, tau) -> float:
    """-(div tau, pi0_K v)_K + sum_F (tau.n_{K,F}, pi0_F v)_F, DoFs only."""
    mesh, K = space.mesh, space.cell
    dofs = space.dofs(coeffs)
    traces = normal_traces(mesh, K, tau)
    div = discrete_divergence(mesh, K, tau)
    return float(
        -div * mesh.volumes[K] * dofs[0]
        + mesh.face_areas[mesh.cell_faces[K]] @ (traces * dofs[1:])
    )


def projected_gradient_from_dofs(mesh, mobility, K, cell_mean, face_means) -> np.ndarray:
    """b^{-1}-weighted projection of b_K grad v onto RT1(K) from the DoFs of v.

    Solves  W c = r  with W the weighted Gram matrix and r the DoF-only
    integration-by-parts right-hand side tested against each basis field.
    """
    d = mesh.dim
    T = trace_matrix(mesh, K)
    areas = mesh.face_areas[mesh.cell_faces[K]]
    div = np.r_[np.zeros(d), float(d)]
    rhs = -div * mesh.volumes[K] * cell_mean + T.T @ (areas * np.asarray(face_means, dtype=float))
    return np.linalg.solve(flux_gram(mesh, mobility, K), rhs)


def flux_gap_l2(space: LocalPotentialSpace, coeffs, tau) -> float:
    """||tau - b_K grad v||_{L2(K)} by quadrature."""
    mesh, K = space.mesh, space.cell
    pts, wts = cell_rule(mesh, K, MAX_DEGREE)
    diff = eval_flux(mesh, K, tau, pts) - space.gradient(coeffs, pts) @ space.b.T
    return float(np.sqrt(wts @ np.einsum("qi,qi->q", diff, diff)))


def flux_map_surjectivity_check(mesh, K: int) -> dict:
    """Rank of RT1(K) -> face normal traces and the norm of its right inverse.

    The right-inverse constant is the smallest C with
    ``(||tau||_K^2 + h_K^2 ||div tau||_K^2)^{1/2} <= C h_K^{1/2} ||tau.n||_{dK}``.
    """
    d = mesh.dim
    T = trace_matrix(mesh, K)
    sv = np.linalg.svd(T, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * 1e-12))
    if rank < d + 1:
        raise RankDeficient(f"cell {K}: trace matrix rank {rank} < {d + 1}")
    h = mesh.diameters[K]
    Tinv = np.linalg.inv(T)
    N = flux_l2_gram(mesh, K)
    N[d, d] += h**2 * d**2 * mesh.volumes[K]
    A = Tinv.T @ N @ Tinv
    B = h * np.diag(mesh.face_areas[mesh.cell_faces[K]])
    C = float(np.sqrt(sla.eigh(A, B, eigvals_only=True)[-1]))
    return {
        "rank": rank,
        "right_inverse_norm": C,
        "singular_values": sv.tolist(),
        "flagged": C > FLUX_FLAG_THRESHOLD,
    }
