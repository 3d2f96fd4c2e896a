"""Conforming simplicial meshes in 2D and 3D with the geometric data the
discrete formulations need.

Local face ``i`` of a cell is the face opposite its local vertex ``i``.
Every face carries one global unit normal ``n_F``: the outward normal of its
lowest-indexed incident cell.  ``eps[K, i]`` is ``+1`` when the outward
normal of ``K`` on its local face ``i`` equals ``n_F`` and ``-1`` otherwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import DegenerateCell, NonManifold, SchemaError, Unsupported

VOLUME_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    vertices: np.ndarray  # (nv, d)
    cells: np.ndarray  # (nc, d+1), positively oriented
    faces: np.ndarray  # (nf, d), sorted vertex indices
    cell_faces: np.ndarray  # (nc, d+1), local face i opposite local vertex i
    face_cells: tuple  # per face: (K,) or (K_lo, K_hi)

    # geometry
    volumes: np.ndarray = field(repr=False)
    barycenters: np.ndarray = field(repr=False)
    diameters: np.ndarray = field(repr=False)
    face_areas: np.ndarray = field(repr=False)
    face_barycenters: np.ndarray = field(repr=False)
    face_normals: np.ndarray = field(repr=False)  # n_F, (nf, d)
    eps: np.ndarray = field(repr=False)  # (nc, d+1)
    normals: np.ndarray = field(repr=False)  # outward n_{K,F}, (nc, d+1, d)
    dists: np.ndarray = field(repr=False)  # d_{K,F}, (nc, d+1)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def boundary(self) -> np.ndarray:
        """Boolean flag per face, True on the domain boundary."""
        return np.array([len(c) == 1 for c in self.face_cells])

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    def cell_vertices(self, K: int) -> np.ndarray:
        return self.vertices[self.cells[K]]

    def face_vertices(self, F: int) -> np.ndarray:
        return self.vertices[self.faces[F]]

    def local_face_index(self, K: int, F: int) -> int:
        return int(np.flatnonzero(self.cell_faces[K] == F)[0])

    def barycentric_gradients(self, K: int) -> np.ndarray:
        """Rows are the (constant) gradients of the barycentric coordinates."""
        return _barycentric_gradients(self.cell_vertices(K))

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "vertices": self.vertices.tolist(),
            "cells": self.cells.tolist(),
        }


def _barycentric_gradients(P: np.ndarray) -> np.ndarray:
    J = (P[1:] - P[0]).T
    G = np.linalg.inv(J)  # rows: grad lambda_1..lambda_d
    return np.vstack([-G.sum(axis=0), G])


def _signed_volume(P: np.ndarray) -> float:
    d = P.shape[1]
    return float(np.linalg.det((P[1:] - P[0]).T)) / math.factorial(d)


def _diameter(P: np.ndarray) -> float:
    return max(float(np.linalg.norm(a - b)) for a, b in combinations(P, 2))


def _face_measure(Q: np.ndarray) -> float:
    E = (Q[1:] - Q[0]).T  # d x (d-1)
    m = Q.shape[0] - 1
    return math.sqrt(max(float(np.linalg.det(E.T @ E)), 0.0)) / math.factorial(m)


def build_mesh(dim: int, vertices, cell_tuples) -> Mesh:
    """Build a mesh from vertex coordinates and cell vertex tuples.

    Negatively oriented cells are repaired by swapping their last two
    vertices.  Faces are enumerated in sorted order of their vertex keys.
    """
    if dim not in (2, 3):
        raise Unsupported(f"dimension {dim} not supported")
    V = np.asarray(vertices, dtype=float)
    C = np.asarray(cell_tuples, dtype=int)
    if V.ndim != 2 or V.shape[1] != dim:
        raise ValueError(f"vertices must have shape (nv, {dim})")
    if C.ndim != 2 or C.shape[1] != dim + 1 or len(C) == 0:
        raise ValueError(f"cells must have shape (nc >= 1, {dim + 1})")
    if C.min() < 0 or C.max() >= len(V):
        raise ValueError("cell vertex index out of range")
    keys = [tuple(sorted(c)) for c in C.tolist()]
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate cells")
    if any(len(set(k)) != dim + 1 for k in keys):
        raise DegenerateCell("cell with repeated vertex")

    C = C.copy()
    nc = len(C)
    volumes = np.empty(nc)
    diameters = np.empty(nc)
    for K in range(nc):
        P = V[C[K]]
        h = _diameter(P)
        vol = _signed_volume(P)
        if vol < 0:
            C[K, [-2, -1]] = C[K, [-1, -2]]
            vol = -vol
        if vol <= VOLUME_TOL * h**dim:
            raise DegenerateCell(f"cell {K} has volume {vol:.3e} (h = {h:.3e})")
        volumes[K] = vol
        diameters[K] = h

    incidence: dict[tuple, list] = {}
    for K in range(nc):
        for i in range(dim + 1):
            key = tuple(sorted(np.delete(C[K], i).tolist()))
            incidence.setdefault(key, []).append((K, i))
    face_keys = sorted(incidence)
    for key in face_keys:
        if len(incidence[key]) > 2:
            raise NonManifold(f"face {key} shared by {len(incidence[key])} cells")
    faces = np.array(face_keys, dtype=int)
    nf = len(faces)
    cell_faces = np.empty((nc, dim + 1), dtype=int)
    face_cells = []
    for F, key in enumerate(face_keys):
        inc = sorted(incidence[key])
        face_cells.append(tuple(K for K, _ in inc))
        for K, i in inc:
            cell_faces[K, i] = F

    barycenters = np.array([V[c].mean(axis=0) for c in C])
    face_barycenters = V[faces].mean(axis=1)
    face_areas = np.array([_face_measure(V[f]) for f in faces])

    # n_F from the lowest-indexed incident cell, then signs per cell
    face_normals = np.empty((nf, dim))
    for F in range(nf):
        K = face_cells[F][0]
        i = int(np.flatnonzero(cell_faces[K] == F)[0])
        g = _barycentric_gradients(V[C[K]])[i]
        face_normals[F] = -g / np.linalg.norm(g)
    eps = np.empty((nc, dim + 1))
    for K in range(nc):
        for i, F in enumerate(cell_faces[K]):
            eps[K, i] = 1.0 if face_cells[F][0] == K else -1.0
    normals = eps[:, :, None] * face_normals[cell_faces]
    dists = np.einsum(
        "kfd,kfd->kf", face_barycenters[cell_faces] - barycenters[:, None, :], normals
    )

    return Mesh(
        dim=dim,
        vertices=V,
        cells=C,
        faces=faces,
        cell_faces=cell_faces,
        face_cells=tuple(face_cells),
        volumes=volumes,
        barycenters=barycenters,
        diameters=diameters,
        face_areas=face_areas,
        face_barycenters=face_barycenters,
        face_normals=face_normals,
        eps=eps,
        normals=normals,
        dists=dists,
    )


def structured_triangulation(n: int) -> Mesh:
    """Unit square cut into n x n squares, each split along its (0,0)-(1,1) diagonal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    V = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    cells = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            cells.append((a, b, c))
            cells.append((a, c, d))
    return build_mesh(2, V, cells)


def uniform_refine(mesh: Mesh) -> Mesh:
    """Split every triangle into 4 congruent children via edge midpoints."""
    if mesh.dim != 2:
        raise Unsupported("uniform refinement is only available in 2D")
    V = [tuple(v) for v in mesh.vertices.tolist()]
    mid: dict[tuple, int] = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in mid:
            mid[key] = len(V)
            V.append(tuple((mesh.vertices[a] + mesh.vertices[b]) / 2))
        return mid[key]

    cells = []
    for v0, v1, v2 in mesh.cells.tolist():
        m01, m12, m02 = midpoint(v0, v1), midpoint(v1, v2), midpoint(v0, v2)
        cells += [(v0, m01, m02), (m01, v1, m12), (m02, m12, v2), (m01, m12, m02)]
    return build_mesh(2, V, cells)


def mesh_from_json(data: dict) -> Mesh:
    if not isinstance(data, dict):
        raise SchemaError("mesh file must contain a JSON object")
    allowed = {"dim", "vertices", "cells"}
    unknown = set(data) - allowed
    if unknown:
        raise SchemaError(f"unknown mesh keys: {sorted(unknown)}")
    missing = allowed - set(data)
    if missing:
        raise SchemaError(f"missing mesh keys: {sorted(missing)}")
    try:
        return build_mesh(int(data["dim"]), data["vertices"], data["cells"])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid mesh data: {exc}") from exc


def load_mesh(path) -> Mesh:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    return mesh_from_json(data)
