"""Quadrature on simplices and faces, scaled monomial bases, and the
L2-orthogonal projectors onto cell and face polynomials.

Simplex rules are conical (collapsed) Gauss-Jacobi products.  Every rule
with stated degree ``n`` integrates all monomials of total degree ``<= n``
exactly; the test-suite checks this rather than trusting the construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np
import scipy.linalg as sla
from scipy.special import roots_jacobi

from .errors import DegreeUnavailable, SingularMass

MAX_DEGREE = 6


@dataclass(frozen=True)
class QuadRule:
    dim: int
    degree: int
    points: np.ndarray  # (nq, dim) in the reference simplex
    weights: np.ndarray  # (nq,), sum = 1/dim!


def _gauss_jacobi01(m: int, alpha: int):
    """Gauss rule on [0, 1] for the weight (1 - s)^alpha."""
    x, w = roots_jacobi(m, alpha, 0)
    return (1.0 + x) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def quad_rule(dim: int, degree: int) -> QuadRule:
    """Rule on the reference simplex {x_i >= 0, sum x_i <= 1} of dimension ``dim``."""
    if degree > MAX_DEGREE or degree < 0:
        raise DegreeUnavailable(f"no rule of degree {degree} (max {MAX_DEGREE})")
    m = max(1, math.ceil((degree + 1) / 2))
    if dim == 1:
        s, w = _gauss_jacobi01(m, 0)
        return QuadRule(1, degree, s[:, None], w)
    if dim == 2:
        s, ws = _gauss_jacobi01(m, 1)
        t, wt = _gauss_jacobi01(m, 0)
        pts, wts = [], []
        for (si, wi), (tj, wj) in product(zip(s, ws), zip(t, wt)):
            pts.append((si, tj * (1 - si)))
            wts.append(wi * wj)
        return QuadRule(2, degree, np.array(pts), np.array(wts))
    if dim == 3:
        s, ws = _gauss_jacobi01(m, 2)
        t, wt = _gauss_jacobi01(m, 1)
        r, wr = _gauss_jacobi01(m, 0)
        pts, wts = [], []
        for (si, wi), (tj, wj), (rk, wk) in product(zip(s, ws), zip(t, wt), zip(r, wr)):
            pts.append((si, tj * (1 - si), rk * (1 - si) * (1 - tj)))
            wts.append(wi * wj * wk)
        return QuadRule(3, degree, np.array(pts), np.array(wts))
    raise DegreeUnavailable(f"no rules in dimension {dim}")


def map_rule(P: np.ndarray, degree: int):
    """Physical points and weights of the rule of given degree on simplex ``P``.

    ``P`` holds the m+1 vertices of an m-simplex embedded in R^d (m <= d).
    """
    m = P.shape[0] - 1
    rule = quad_rule(m, degree)
    E = (P[1:] - P[0]).T
    if m == P.shape[1]:
        jac = abs(np.linalg.det(E))
    else:
        jac = math.sqrt(np.linalg.det(E.T @ E))
    return P[0] + rule.points @ E.T, rule.weights * jac


def cell_rule(mesh, K: int, degree: int):
    return map_rule(mesh.cell_vertices(K), degree)


def face_rule(mesh, F: int, degree: int):
    return map_rule(mesh.face_vertices(F), degree)


def _integrate(pts, wts, f):
    vals = np.asarray(f(pts), dtype=float)
    return np.tensordot(wts, vals, axes=(0, 0))


def integrate_cell(mesh, K: int, f, degree_hint: int = MAX_DEGREE):
    """Integral over cell K of ``f`` (maps (nq, d) points to values)."""
    return _integrate(*cell_rule(mesh, K, degree_hint), f)


def integrate_face(mesh, F: int, f, degree_hint: int = MAX_DEGREE):
    return _integrate(*face_rule(mesh, F, degree_hint), f)


def _subdivide(P: np.ndarray):
    """Four congruent sub-triangles of a triangle."""
    a, b, c = P
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return [np.array(t) for t in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))]


def integrate_cell_composite(mesh, K: int, f, levels: int = 1, degree: int = MAX_DEGREE):
    """Composite rule: the triangle is split ``levels`` times into 4 children."""
    if mesh.dim != 2:
        return integrate_cell(mesh, K, f, degree)
    pieces = [mesh.cell_vertices(K)]
    for _ in range(levels):
        pieces = [q for p in pieces for q in _subdivide(p)]
    return sum(_integrate(*map_rule(p, degree), f) for p in pieces)


def monomial_exponents(dim: int, n: int) -> list[tuple]:
    """Exponent tuples with total degree <= n, ordered by degree."""
    exps = [a for a in product(range(n + 1), repeat=dim) if sum(a) <= n]
    return sorted(exps, key=lambda a: (sum(a), tuple(-x for x in a)))


def eval_monomials(exps, z: np.ndarray) -> np.ndarray:
    """Values (nq, nb) of z^alpha for every alpha in ``exps``."""
    return np.column_stack([np.prod(z**np.array(a), axis=1) for a in exps])


class _Basis:
    """Scaled monomials ((y - center) frame / scale)^alpha."""

    def __init__(self, center, frame, scale, n, pts, wts):
        self.center = center
        self.frame = frame  # (d, m): local coordinates = (x - center) @ frame
        self.scale = scale
        self.degree = n
        self.exponents = monomial_exponents(frame.shape[1], n)
        Phi = self.evaluate(pts)
        self.mass = (Phi * wts[:, None]).T @ Phi
        try:
            self._chol = sla.cho_factor(self.mass)
        except sla.LinAlgError as exc:
            raise SingularMass(str(exc)) from exc
        self.condition_number = float(np.linalg.cond(self.mass))

    @property
    def dimension(self) -> int:
        return len(self.exponents)

    def evaluate(self, x) -> np.ndarray:
        z = (np.atleast_2d(x) - self.center) @ self.frame / self.scale
        return eval_monomials(self.exponents, z)

    def solve_mass(self, rhs):
        return sla.cho_solve(self._chol, rhs)

    def __call__(self, coeffs, x):
        return self.evaluate(x) @ coeffs


class CellBasis(_Basis):
    def __init__(self, mesh, K: int, n: int):
        self.cell = K
        pts, wts = cell_rule(mesh, K, min(2 * n, MAX_DEGREE))
        super().__init__(
            mesh.barycenters[K], np.eye(mesh.dim), mesh.diameters[K], n, pts, wts
        )


def _face_frame(Q: np.ndarray) -> np.ndarray:
    E = (Q[1:] - Q[0]).T
    frame, _ = np.linalg.qr(E)
    return frame


class FaceBasis(_Basis):
    def __init__(self, mesh, F: int, n: int):
        self.face = F
        Q = mesh.face_vertices(F)
        pts, wts = face_rule(mesh, F, min(2 * n, MAX_DEGREE))
        scale = max(np.linalg.norm(a - b) for a in Q for b in Q)
        super().__init__(mesh.face_barycenters[F], _face_frame(Q), scale, n, pts, wts)


@lru_cache(maxsize=65536)
def cell_basis(mesh, K: int, n: int) -> CellBasis:
    return CellBasis(mesh, K, n)


@lru_cache(maxsize=65536)
def face_basis(mesh, F: int, n: int) -> FaceBasis:
    return FaceBasis(mesh, F, n)


def project_cell(mesh, K: int, f, n: int, degree_hint: int = MAX_DEGREE) -> np.ndarray:
    """Coefficients of the L2(K)-orthogonal projection of ``f`` onto P^n(K)."""
    basis = cell_basis(mesh, K, n)
    pts, wts = cell_rule(mesh, K, degree_hint)
    rhs = basis.evaluate(pts).T @ (wts * np.asarray(f(pts), dtype=float))
    return basis.solve_mass(rhs)


def project_face(mesh, F: int, g, n: int, degree_hint: int = MAX_DEGREE) -> np.ndarray:
    basis = face_basis(mesh, F, n)
    pts, wts = face_rule(mesh, F, degree_hint)
    rhs = basis.evaluate(pts).T @ (wts * np.asarray(g(pts), dtype=float))
    return basis.solve_mass(rhs)


def cell_mean(mesh, K: int, f, degree_hint: int = MAX_DEGREE) -> float:
    return float(integrate_cell(mesh, K, f, degree_hint)) / mesh.volumes[K]


def face_mean(mesh, F: int, g, degree_hint: int = MAX_DEGREE) -> float:
    return float(integrate_face(mesh, F, g, degree_hint)) / mesh.face_areas[F]
