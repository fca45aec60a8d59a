import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdgz import mesh as hmesh
from hdgz.mesh import (BoundaryTag, MeshError, all_dirichlet,
                       build_structured, dirichlet_u_neumann_p, read_text,
                       refine_uniform, skeleton_report, write_text)

from conftest import unit_square


def test_n1_counts():
    mesh = unit_square(1)
    assert mesh.n_elements == 2
    assert mesh.n_faces == 5
    assert len(mesh.boundary_faces) == 4
    assert len(mesh.interior_faces) == 1


def test_n2_counts_and_euler():
    mesh = unit_square(2)
    assert mesh.n_elements == 8
    assert mesh.n_faces == 16
    assert len(mesh.boundary_faces) == 8
    assert len(mesh.interior_faces) == 8
    assert mesh.n_vertices - mesh.n_faces + mesh.n_elements == 1


@given(n=st.integers(1, 8),
       diagonal=st.sampled_from(["right", "left", "alternating"]))
@settings(max_examples=20, deadline=None)
def test_structured_invariants(n, diagonal):
    if diagonal == "alternating" and n % 2:
        n += 1
    mesh = build_structured((0.0, 0.0, 1.0, 1.0), n, diagonal=diagonal)
    assert mesh.n_elements == 2 * n * n
    # Euler relation on the simply connected rectangle
    assert mesh.n_vertices - mesh.n_faces + mesh.n_elements == 1
    # positive areas, exact cover
    assert np.all(mesh.areas > 0)
    assert abs(mesh.areas.sum() - 1.0) < 1e-12
    # every interior face has two adjacent elements, boundary exactly one
    assert np.all(mesh.neighbor[mesh.interior_faces] >= 0)
    assert np.all(mesh.neighbor[mesh.boundary_faces] == -1)
    # local quasi-uniformity with finite gamma
    gamma = mesh.gamma()
    assert 1.0 <= gamma < 10.0
    h_k = mesh.h_elem[:, None]
    h_f = mesh.h_face[mesh.element_faces]
    assert np.all(h_f <= h_k + 1e-12)
    assert np.all(h_k <= gamma * h_f + 1e-12)


def test_face_sizes_on_large_domain():
    n = 7
    mesh = build_structured((0.0, 0.0, 2310.0, 2310.0), n)
    axis = 2310.0 / n
    diag = axis * np.sqrt(2.0)
    for h in mesh.h_face:
        assert min(abs(h - axis), abs(h - diag)) < 1e-9


def test_owner_normal_points_to_neighbor():
    mesh = unit_square(3)
    cent = mesh.vertices[mesh.elements].mean(axis=1)
    for f in mesh.interior_faces:
        d = cent[mesh.neighbor[f]] - cent[mesh.owner[f]]
        assert np.dot(mesh.normals[f], d) > 0


def test_boundary_normal_points_outward():
    mesh = unit_square(2)
    cent = mesh.vertices[mesh.elements].mean(axis=1)
    mid = 0.5 * (mesh.vertices[mesh.faces[:, 0]]
                 + mesh.vertices[mesh.faces[:, 1]])
    for f in mesh.boundary_faces:
        assert np.dot(mesh.normals[f], mid[f] - cent[mesh.owner[f]]) > 0


def test_build_rejects_degenerate_input():
    with pytest.raises(MeshError):
        build_structured((0.0, 0.0, 1.0, 1.0), 0)
    with pytest.raises(MeshError):
        build_structured((0.0, 0.0, 0.0, 1.0), 2)


def test_refine_n1_gives_8_elements():
    assert refine_uniform(unit_square(1)).n_elements == 8


def test_refine_preserves_gamma_and_halves_h():
    mesh = unit_square(2)
    fine = refine_uniform(mesh)
    assert abs(mesh.gamma() - fine.gamma()) < 1e-12
    assert abs(fine.h_elem.max() - 0.5 * mesh.h_elem.max()) < 1e-12
    assert abs(fine.h_face.min() - 0.5 * mesh.h_face.min()) < 1e-12


def test_refine_inherits_boundary_tags():
    mesh = unit_square(2, tag_rule=dirichlet_u_neumann_p)
    fine = refine_uniform(mesh)
    mid = 0.5 * (fine.vertices[fine.faces[:, 0]]
                 + fine.vertices[fine.faces[:, 1]])
    for f in fine.boundary_faces:
        ts, tf = dirichlet_u_neumann_p(mid[f])
        assert fine.tag_solid[f] is ts
        assert fine.tag_flux[f] is tf


def test_skeleton_report_n1():
    rep = skeleton_report(unit_square(1))
    assert rep["min_h_face"] == pytest.approx(1.0)
    assert rep["max_h_face"] == pytest.approx(np.sqrt(2.0))
    assert rep["gamma"] >= 1.0


def test_skeleton_report_tag_counts():
    rep = skeleton_report(unit_square(2, tag_rule=all_dirichlet))
    assert rep["tag_counts"][BoundaryTag.DIRICHLET_U.value] == 8
    assert rep["tag_counts"][BoundaryTag.DIRICHLET_PSI.value] == 8
    assert rep["tag_counts"][BoundaryTag.NEUMANN_P.value] == 0


def test_gamma_constant_across_refinement():
    mesh = unit_square(2)
    gammas = []
    for _ in range(3):
        gammas.append(mesh.gamma())
        mesh = refine_uniform(mesh)
    assert max(gammas) - min(gammas) < 1e-12


def test_text_roundtrip(tmp_path):
    mesh = unit_square(3, tag_rule=dirichlet_u_neumann_p)
    path = tmp_path / "mesh.txt"
    write_text(mesh, path)
    back = read_text(path)
    assert back.hash() == mesh.hash()
    assert np.array_equal(back.elements, mesh.elements)


def test_locate_maps_centroids_home():
    mesh = unit_square(4, diagonal="alternating")
    cent = mesh.vertices[mesh.elements].mean(axis=1)
    elem, ref = mesh.locate(cent)
    assert np.array_equal(elem, np.arange(mesh.n_elements))
    assert np.all(ref >= -1e-12) and np.all(ref.sum(axis=1) <= 1 + 1e-12)


def test_locate_flags_outside_points():
    mesh = unit_square(2)
    elem, _ = mesh.locate(np.array([[2.0, 2.0]]))
    assert elem[0] == -1
