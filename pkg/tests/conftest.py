import itertools

import numpy as np
import pytest

from pmequiv.local_spaces import Mobility, rotated_anisotropic
from pmequiv.mesh import build_mesh, structured_triangulation
from pmequiv.schemes import LoadField

MOBILITIES = ("identity", "aniso", "random")
LOADS = ("constant:1", "sinsin")
SIZES = (2, 4, 8)


def make_mobility(kind, mesh, seed=7):
    if kind == "identity":
        return Mobility.identity(mesh)
    if kind == "aniso":
        return Mobility.uniform(mesh, rotated_anisotropic(1e3, 30.0))
    return Mobility.random(mesh, np.random.default_rng(seed), 1.0, 1e3)


def case_matrix():
    """(n, mobility kind, load) triples of the verification matrix."""
    return [(n, m, f) for n in SIZES for m in MOBILITIES for f in LOADS]


def two_tet_mesh():
    verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]]
    return build_mesh(3, verts, [(0, 1, 2, 3), (1, 2, 3, 4)])


def cube_mesh():
    """Unit cube split into six tetrahedra around the main diagonal."""
    verts = [[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)]
    idx = {tuple(v): n for n, v in enumerate(verts)}
    cells = []
    for perm in itertools.permutations(range(3)):
        p = np.zeros(3, dtype=int)
        chain = [idx[tuple(p)]]
        for axis in perm:
            p[axis] = 1
            chain.append(idx[tuple(p)])
        cells.append(tuple(chain))
    return build_mesh(3, verts, cells)


@pytest.fixture
def ref_triangle():
    return build_mesh(2, [[0, 0], [1, 0], [0, 1]], [(0, 1, 2)])


@pytest.fixture
def ref_tet():
    return build_mesh(3, [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [(0, 1, 2, 3)])


@pytest.fixture
def mesh4():
    return structured_triangulation(4)


@pytest.fixture
def unit_load():
    return LoadField.parse("constant:1")
