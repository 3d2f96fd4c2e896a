import itertools
import json

import numpy as np
import pytest

from pmequiv.errors import DegenerateCell, NonManifold, SchemaError, Unsupported
from pmequiv.mesh import build_mesh, load_mesh, mesh_from_json, structured_triangulation, uniform_refine

from conftest import cube_mesh, two_tet_mesh


def brute_force_faces(mesh):
    """Face -> incident cells, enumerated independently of the mesh builder."""
    table = {}
    for K, cell in enumerate(mesh.cells.tolist()):
        for sub in itertools.combinations(sorted(cell), mesh.dim):
            table.setdefault(sub, []).append(K)
    return table


def test_reference_triangle_geometry(ref_triangle):
    m = ref_triangle
    assert m.volumes[0] == pytest.approx(0.5, abs=1e-15)
    assert np.allclose(m.barycenters[0], [1 / 3, 1 / 3], atol=1e-15)
    F = [f for f in range(m.n_faces) if set(m.faces[f]) == {0, 1}][0]
    i = m.local_face_index(0, F)
    assert m.dists[0, i] == pytest.approx(1 / 3, abs=1e-15)
    assert np.allclose(m.normals[0, i], [0, -1], atol=1e-15)


def test_structured_two_by_two_counts():
    m = structured_triangulation(2)
    assert m.n_cells == 8
    assert m.n_faces == 16
    assert m.boundary.sum() == 8
    assert len(brute_force_faces(m)) == 16


def test_structured_one_and_four():
    m1 = structured_triangulation(1)
    assert (m1.n_cells, m1.n_faces) == (2, 5)
    m4 = structured_triangulation(4)
    assert m4.n_cells == 32
    assert m4.volumes.sum() == pytest.approx(1.0, abs=1e-14)


def test_incidence_audit_n8():
    m = structured_triangulation(8)
    table = brute_force_faces(m)
    for F in range(m.n_faces):
        cells = table[tuple(m.faces[F])]
        assert tuple(sorted(cells)) == m.face_cells[F]
    for F in m.interior_faces:
        assert len(m.face_cells[F]) == 2


@pytest.mark.parametrize("mesh", [structured_triangulation(3), cube_mesh(), two_tet_mesh()])
def test_orientation_and_normals(mesh):
    d = mesh.dim
    for K in range(mesh.n_cells):
        P = mesh.cell_vertices(K)
        assert np.linalg.det((P[1:] - P[0]).T) > 0
        # face i is opposite vertex i and its normal points away from it
        for i, F in enumerate(mesh.cell_faces[K]):
            assert i not in [list(mesh.cells[K]).index(v) for v in mesh.faces[F]]
            assert (mesh.face_barycenters[F] - P[i]) @ mesh.normals[K, i] > 0
            assert mesh.dists[K, i] > 0
        # divergence theorem: sum |F| n_{K,F} = 0 and sum |F| d_{K,F} = d |K|
        A = mesh.face_areas[mesh.cell_faces[K]]
        assert np.allclose(A @ mesh.normals[K], 0, atol=1e-14)
        assert A @ mesh.dists[K] == pytest.approx(d * mesh.volumes[K], rel=1e-13)
    for F in mesh.interior_faces:
        Kp, Km = mesh.face_cells[F]
        ip, im = mesh.local_face_index(Kp, F), mesh.local_face_index(Km, F)
        assert mesh.eps[Kp, ip] == 1 and mesh.eps[Km, im] == -1
        assert np.allclose(mesh.normals[Kp, ip], -mesh.normals[Km, im])


def test_orientation_repair():
    m = build_mesh(2, [[0, 0], [1, 0], [0, 1]], [(0, 2, 1)])
    assert m.volumes[0] == pytest.approx(0.5)


def test_degenerate_and_nonmanifold():
    with pytest.raises(DegenerateCell):
        build_mesh(2, [[0, 0], [1, 0], [2, 0]], [(0, 1, 2)])
    with pytest.raises(NonManifold):
        build_mesh(2, [[0, 0], [1, 0], [0, 1], [0, -1], [0.5, 2]], [(0, 1, 2), (0, 1, 3), (0, 1, 4)])


def test_refinement():
    m = structured_triangulation(1)
    r = uniform_refine(m)
    assert r.n_cells == 8
    assert r.h_max == pytest.approx(m.h_max / 2)
    assert r.volumes.sum() == pytest.approx(m.volumes.sum(), abs=1e-15)
    with pytest.raises(Unsupported):
        uniform_refine(two_tet_mesh())


def test_json_roundtrip_and_schema(tmp_path):
    m = structured_triangulation(2)
    path = tmp_path / "m.json"
    path.write_text(json.dumps(m.to_json()))
    m2 = load_mesh(path)
    assert np.array_equal(m2.cells, m.cells) and np.array_equal(m2.faces, m.faces)
    with pytest.raises(SchemaError):
        mesh_from_json({"dim": 2, "vertices": [], "cells": [], "extra": 1})
    with pytest.raises(SchemaError):
        mesh_from_json({"dim": 2, "vertices": [[0, 0]]})
    path.write_text(path.read_text()[:20])
    with pytest.raises(SchemaError):
        load_mesh(path)


def test_three_dimensional_meshes():
    m = cube_mesh()
    assert m.volumes.sum() == pytest.approx(1.0, abs=1e-14)
    assert len(m.interior_faces) == 6
    t = two_tet_mesh()
    assert len(t.interior_faces) == 1
