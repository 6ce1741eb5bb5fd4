"""Parameterization stage tests: cones, refinement, flattening, layout,
and charts."""

import json

import numpy as np
import pytest

from quadcontour.mesh import Mesh, MeshError
from quadcontour.param import (
    angle_defects, build_charts, compute_conformal_metric, cut_and_layout,
    load_parameterization, parameterize, save_parameterization, select_cones,
    subdivide_cone_neighborhoods)
from quadcontour.param.cones import cone_count_for_genus, pick_cluster_cone
from quadcontour.shapes import (
    flat_grid, genus2, icosphere, icosahedron, open_cylinder, tetrahedron,
    torus, two_spheres)


# -- cone selection ---------------------------------------------------------


def test_tetrahedron_angle_defects():
    mesh = tetrahedron()
    defects = angle_defects(mesh)
    # every corner of a regular tetrahedron is 60 degrees, three per vertex
    np.testing.assert_allclose(defects, np.pi, atol=1e-12)


def test_cone_count_formula():
    assert cone_count_for_genus(0) == 8
    assert cone_count_for_genus(1) == 0
    assert cone_count_for_genus(2) == 4
    assert cone_count_for_genus(5) == 16


def test_icosphere_gets_eight_cones():
    cones = select_cones(icosphere(2))
    assert len(cones) == 8
    assert len(set(cones.tolist())) == 8


def test_genus2_gets_four_cones():
    cones = select_cones(genus2())
    assert len(cones) == 4


def test_torus_gets_no_cones():
    assert len(select_cones(torus(n_major=16, n_minor=8))) == 0


def test_two_spheres_get_eight_cones_each():
    mesh = two_spheres(2)
    cones = select_cones(mesh)
    assert len(cones) == 16
    labels = mesh.vertex_components()[cones]
    assert sorted(np.bincount(labels).tolist()) == [8, 8]


def test_cluster_pick_avoids_spike():
    mesh = flat_grid(7, 7, spike=27, spike_height=0.8)
    defects = angle_defects(mesh)
    interior = np.nonzero(~mesh.boundary_vertex)[0]
    assert 27 in interior.tolist()
    chosen = pick_cluster_cone(defects, interior, mesh.boundary_vertex)
    assert chosen != 27
    assert abs(defects[chosen]) < abs(defects[27])


# -- cone neighborhood refinement ------------------------------------------


def test_subdivision_counts_on_icosahedron():
    mesh = icosahedron()
    refined = subdivide_cone_neighborhoods(mesh, np.array([0]))
    # five incident faces become twenty, five ring faces split in two
    assert len(refined.faces) == 40
    assert len(refined.vertices) == 22
    assert refined.is_closed()
    assert refined.genus() == 0
    assert len(refined.faces_around_vertex(0)) == 5


def test_subdivision_without_cones_is_identity():
    mesh = icosphere(1)
    assert subdivide_cone_neighborhoods(mesh, np.array([], dtype=np.int64)) \
        is mesh


def test_subdivision_masks_on_flat_patch():
    mesh = flat_grid(5, 5)
    center = 14
    assert not mesh.boundary_vertex[center]
    refined = subdivide_cone_neighborhoods(mesh, np.array([center]))
    # a flat neighborhood stays flat under the subdivision masks
    np.testing.assert_allclose(refined.vertices[:, 2], 0.0, atol=1e-15)
    ring = sorted(mesh.vertex_ring(center))
    # edge midpoint mask: 3/8 (a + b) + 1/8 (c + d) for an interior edge
    a, b = center, ring[0]
    shared = [v for v in mesh.vertex_ring(a) if v in mesh.vertex_ring(b)]
    expected = 0.375 * (mesh.vertices[a] + mesh.vertices[b]) \
        + 0.125 * mesh.vertices[shared].sum(axis=0)
    d = np.linalg.norm(refined.vertices - expected, axis=1)
    assert d.min() < 1e-12


# -- conformal flattening ---------------------------------------------------


def law_of_cosines_angle_sums(mesh, lengths):
    fl = lengths[mesh.edge_of_halfedge].reshape(-1, 3)
    sums = np.zeros(len(mesh.vertices))
    for k in range(3):
        opp = fl[:, (k + 1) % 3]
        e1 = fl[:, (k + 2) % 3]
        e2 = fl[:, k]
        cos = (e1 ** 2 + e2 ** 2 - opp ** 2) / (2 * e1 * e2)
        np.add.at(sums, mesh.faces[:, k], np.arccos(np.clip(cos, -1, 1)))
    return sums


def test_flat_disk_is_already_conformal():
    mesh = flat_grid(6, 6)
    metric = compute_conformal_metric(mesh, np.array([], dtype=np.int64))
    np.testing.assert_allclose(metric.scale_factors, 0.0, atol=1e-12)
    np.testing.assert_allclose(metric.lengths, mesh.edge_lengths(),
                               rtol=1e-12)


def test_tetrahedron_all_cones_needs_no_scaling():
    mesh = tetrahedron()
    metric = compute_conformal_metric(mesh, np.arange(4))
    np.testing.assert_allclose(metric.scale_factors, 0.0, atol=1e-15)


def test_icosphere_metric_flattens_noncone_vertices():
    mesh = icosphere(2)
    cones = select_cones(mesh)
    metric = compute_conformal_metric(mesh, cones)
    sums = law_of_cosines_angle_sums(mesh, metric.lengths)
    mask = np.ones(len(mesh.vertices), dtype=bool)
    mask[cones] = False
    assert np.abs(sums[mask] - 2 * np.pi).max() < 1e-8


def test_torus_metric_flattens_everywhere_but_gauge():
    mesh = torus(n_major=16, n_minor=8)
    metric = compute_conformal_metric(mesh, np.array([], dtype=np.int64))
    sums = law_of_cosines_angle_sums(mesh, metric.lengths)
    resid = np.abs(sums - 2 * np.pi)
    # the gauge vertex is pinned but its defect must still vanish, since the
    # total curvature of a torus is zero and all other vertices are flat
    assert resid.max() < 1e-8


# -- cutting and layout -----------------------------------------------------


def test_single_triangle_layout_is_congruent():
    mesh = Mesh(np.array([[0.0, 0, 0], [2.0, 0, 0], [0.5, 1.5, 0]]),
                np.array([[0, 1, 2]]))
    param = cut_and_layout(mesh, mesh.edge_lengths(),
                           np.array([], dtype=np.int64))
    uv = param.corner_uv[0]
    for a, b in [(0, 1), (1, 2), (2, 0)]:
        want = np.linalg.norm(mesh.vertices[a] - mesh.vertices[b])
        got = np.linalg.norm(uv[a] - uv[b])
        assert abs(got - want) < 1e-12


def test_flat_disk_layout_is_isometric():
    mesh = flat_grid(6, 5)
    param = cut_and_layout(mesh, mesh.edge_lengths(),
                           np.array([], dtype=np.int64))
    assert len(param.cut_edges) == 0
    # one uv copy per vertex; pairwise distances match the plane
    pos = np.zeros((len(mesh.vertices), 2))
    pos[mesh.faces] = param.corner_uv
    d_uv = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    d_in = np.linalg.norm(mesh.vertices[:, None, :]
                          - mesh.vertices[None, :, :], axis=2)
    np.testing.assert_allclose(d_uv, d_in, atol=1e-9)


def test_icosphere_parameterization_invariants():
    param = parameterize(icosphere(2))
    assert param.diagnostics["seam_mismatch"] < 1e-8
    assert param.diagnostics["angle_residual"] < 1e-8
    assert param.diagnostics["min_doubled_area"] > 0
    # every cone terminates at least one seam
    seam_verts = set()
    for h1, h2 in param.seam_halfedges:
        f, k = divmod(int(h1), 3)
        seam_verts.add(int(param.mesh.faces[f, k]))
        seam_verts.add(int(param.mesh.faces[f, (k + 1) % 3]))
    for c in param.cones:
        assert int(c) in seam_verts


def test_torus_cut_opens_two_loops():
    param = parameterize(torus(n_major=16, n_minor=8))
    assert len(param.cut_edges) > 0
    # copies exceed vertices exactly by the doubled seam interior
    assert len(param.copy_vertex) > len(param.mesh.vertices)


def test_open_cylinder_cut_joins_boundaries():
    mesh = open_cylinder(n_around=16, n_along=4)
    param = parameterize(mesh)
    assert len(param.cut_edges) >= 1
    assert param.diagnostics["min_doubled_area"] > 0


def test_two_component_scene_parameterizes():
    param = parameterize(two_spheres(1))
    assert param.diagnostics["seam_mismatch"] < 1e-8


def test_genus2_parameterizes():
    param = parameterize(genus2())
    assert len(param.cones) == 4
    assert param.diagnostics["min_doubled_area"] > 0


# -- charts -----------------------------------------------------------------


def test_flat_disk_chart_rotations_agree():
    mesh = flat_grid(5, 5)
    param = cut_and_layout(mesh, mesh.edge_lengths(),
                           np.array([], dtype=np.int64))
    charts = build_charts(param)
    v = 14
    rots = [charts.vertex_rotation[f, k]
            for f in mesh.faces_around_vertex(v)
            for k in range(3) if mesh.faces[f, k] == v]
    assert len(rots) == 6
    for r in rots[1:]:
        np.testing.assert_allclose(r, rots[0], atol=1e-9)


def test_icosphere_chart_angles_tile():
    param = parameterize(icosphere(2))
    charts = param.charts
    mask = ~charts.cone_vertex
    np.testing.assert_allclose(charts.vertex_angle_sum[mask], 2 * np.pi,
                               atol=1e-8)
    # vertices on the cut have several uv copies yet one closed chart
    cut_vertices = {int(v) for e in param.cut_edges
                    for v in param.mesh.edges[e]}
    seam_noncone = [v for v in cut_vertices
                    if not charts.cone_vertex[v]]
    assert seam_noncone, "expected non-cone vertices on the cut"


def test_chart_fan_start_choice_builds_either_way():
    param = parameterize(icosphere(1))
    c0 = build_charts(param, fan_start_offset=0)
    c1 = build_charts(param, fan_start_offset=1)
    # rotations differ by the changed axis choice but closure still holds
    assert c0.closure_residual < 1e-8
    assert c1.closure_residual < 1e-8


def test_edge_chart_offsets_take_sides():
    param = parameterize(icosphere(1))
    mesh = param.mesh
    charts = param.charts
    for f in range(len(mesh.faces)):
        for k in range(3):
            e = int(mesh.edge_of_halfedge[3 * f + k])
            cy = charts.midpoint_offset[f, k, 1]
            if int(mesh.faces[f, k]) == int(mesh.edges[e, 0]):
                assert cy > 0
            else:
                assert cy < 0
    assert (charts.edge_uv_length > 0).all()


# -- import/export ----------------------------------------------------------


def test_parameterization_roundtrip(tmp_path):
    param = parameterize(icosphere(1))
    path = tmp_path / "param.json"
    save_parameterization(param, str(path))
    loaded = load_parameterization(str(path))
    np.testing.assert_allclose(loaded.corner_uv, param.corner_uv, atol=1e-15)
    np.testing.assert_array_equal(loaded.seam_halfedges,
                                  param.seam_halfedges)
    np.testing.assert_array_equal(loaded.cones, param.cones)
    assert loaded.charts is not None


def test_import_rejects_other_files(tmp_path):
    path = tmp_path / "other.json"
    path.write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(Exception):
        load_parameterization(str(path))
