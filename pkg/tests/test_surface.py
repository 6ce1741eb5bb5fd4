import numpy as np
import pytest

from quadcontour.mesh import Mesh
from quadcontour.param import parameterize
from quadcontour.shapes import flat_grid, icosphere
from quadcontour.surface import (
    CANONICAL_DOMAINS,
    CONTROL_TABLES,
    MacroPatch,
    QuadraticPatch,
    SurfaceError,
    build_macropatch,
    build_surface,
    dof_count,
    extract_local_dofs,
    face_dof_rows,
    make_cone_patch,
    monomial_coefficients,
    save_patches,
    zero_dofs,
)


def quadratic_q_loc(coeffs):
    """Local DOFs that exactly encode sum_k coeffs[k] * monomial_k per
    output coordinate, monomials ordered (1, u, v, u^2, v^2, uv)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)  # (6, 3)

    def val(u, v):
        return (coeffs[0] + coeffs[1] * u + coeffs[2] * v
                + coeffs[3] * u * u + coeffs[4] * v * v + coeffs[5] * u * v)

    def grad(u, v):
        gu = coeffs[1] + 2 * coeffs[3] * u + coeffs[5] * v
        gv = coeffs[2] + 2 * coeffs[4] * v + coeffs[5] * u
        return gu, gv

    r = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    q_loc = np.zeros((12, 3))
    for i in range(3):
        q_loc[i] = val(*r[i])
    pairs = [(0, 1), (1, 0), (1, 2), (2, 1), (2, 0), (0, 2)]
    for row, (i, j) in enumerate(pairs, start=3):
        gu, gv = grad(*r[i])
        e = r[j] - r[i]
        q_loc[row] = gu * e[0] + gv * e[1]
    for row, (i, j) in enumerate([(0, 1), (1, 2), (2, 0)], start=9):
        k = 3 - i - j
        m = (r[i] + r[j]) / 2
        gu, gv = grad(*m)
        e = r[k] - m
        q_loc[row] = gu * e[0] + gv * e[1]
    return q_loc, val


def eval_uv(patches, f, uv_pt):
    """Evaluate the surface of face f at a point given in face uv."""
    for l in range(12):
        patch = patches.patch(12 * f + l)
        a, b, c = patch.domain
        m = np.column_stack([b - a, c - a])
        loc = np.linalg.solve(m, uv_pt - a)
        if loc[0] >= -1e-9 and loc[1] >= -1e-9 and loc.sum() <= 1 + 1e-9:
            return patch.evaluate(loc[0], loc[1]), (l, loc, m)
    raise AssertionError("uv point not inside any sub-patch")


def deriv_uv(patches, f, uv_pt, direction):
    """Directional derivative with respect to face uv."""
    _, (l, loc, m) = eval_uv(patches, f, uv_pt)
    patch = patches.patch(12 * f + l)
    pu, pv = patch.jacobian(loc[0], loc[1])
    dloc = np.linalg.solve(m, direction)
    return pu * dloc[0] + pv * dloc[1]


# -- control tables ---------------------------------------------------------


def test_tables_reproduce_random_quadratics():
    rng = np.random.default_rng(7)
    coeffs = rng.normal(size=(6, 3))
    q_loc, val = quadratic_q_loc(coeffs)
    macro = build_macropatch(q_loc, np.array([[0, 0], [1, 0], [0, 1]]))
    pts = rng.random((50, 2))
    pts = pts[pts.sum(axis=1) <= 1.0]
    assert len(pts) >= 20
    for u, v in pts:
        for l, dom in enumerate(CANONICAL_DOMAINS):
            a, b, c = dom
            m = np.column_stack([b - a, c - a])
            loc = np.linalg.solve(m, np.array([u, v]) - a)
            if loc.min() >= -1e-12 and loc.sum() <= 1 + 1e-12:
                got = macro.children[l].evaluate(loc[0], loc[1])
                assert np.abs(got - val(u, v)).max() < 1e-12
                break
        else:
            raise AssertionError("point escaped the split")


def test_linear_dofs_give_planar_control_net():
    # graph of 2u - 3v + 1 over the unit triangle
    coeffs = np.array([
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 2.0],
        [0.0, 1.0, -3.0],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
    ])
    q_loc, _ = quadratic_q_loc(coeffs)
    macro = build_macropatch(q_loc, np.array([[0, 0], [1, 0], [0, 1]]))
    for child in macro.children:
        x, y, z = child.control.T
        assert np.abs(z - (2 * x - 3 * y + 1)).max() < 1e-12


def test_tables_have_threefold_symmetry():
    perm = np.empty(12, dtype=int)
    perm[[0, 1, 2]] = [1, 2, 0]
    # d rows: 01->12, 10->21, 12->20, 21->02, 20->01, 02->10
    perm[[3, 4, 5, 6, 7, 8]] = [5, 6, 7, 8, 3, 4]
    perm[[9, 10, 11]] = [10, 11, 9]
    child_map = [2, 3, 4, 5, 0, 1, 8, 9, 10, 11, 6, 7]
    for l in range(12):
        rotated = CONTROL_TABLES[l][:, :]
        target = CONTROL_TABLES[child_map[l]]
        assert np.array_equal(target[:, perm], rotated)


def test_child_domains_tile_face():
    areas = []
    for dom in CANONICAL_DOMAINS:
        a, b, c = dom
        e1, e2 = b - a, c - a
        areas.append((e1[0] * e2[1] - e1[1] * e2[0]) / 2)
    areas = np.array(areas)
    assert (areas > 0).all()
    assert abs(areas.sum() - 0.5) < 1e-15


# -- evaluation -------------------------------------------------------------


def test_evaluate_corners_and_normal():
    control = np.array([
        [0, 0, 0], [1, 0, 1], [0, 1, 0],
        [0.5, 0, 0], [0, 0.5, 0], [0.5, 0.5, 0],
    ], dtype=np.float64)
    patch = QuadraticPatch(control, np.array([[0.0, 0], [1, 0], [0, 1]]))
    assert np.allclose(patch.evaluate(0, 0), control[0])
    assert np.allclose(patch.evaluate(1, 0), control[1])
    assert np.allclose(patch.evaluate(0, 1), control[2])
    # graph of z = u^2: normal direction (-2u, 0, 1)
    for u, v in [(0.2, 0.1), (0.5, 0.3), (0.0, 0.9)]:
        assert np.allclose(patch.evaluate(u, v), [u, v, u * u])
        assert np.allclose(patch.normal(u, v), [-2 * u, 0.0, 1.0])
    mono = monomial_coefficients(control)
    assert np.allclose(mono[3], [0, 0, 1])  # uu
    assert np.allclose(mono[1], [1, 0, 0])  # u
    assert np.allclose(mono[5], [0, 0, 0])  # uv


def test_out_of_domain_is_polynomial_extension():
    coeffs = np.random.default_rng(0).normal(size=(6, 3))
    q_loc, val = quadratic_q_loc(coeffs)
    macro = build_macropatch(q_loc, np.array([[0, 0], [1, 0], [0, 1]]))
    child = macro.children[0]
    assert not child.contains(2.0, 2.0)
    got = child.evaluate(2.0, 2.0)
    assert np.isfinite(got).all()


# -- local DOF extraction ---------------------------------------------------


def corner_of_vertex(mesh: Mesh):
    where = {}
    for f in range(len(mesh.faces)):
        for k in range(3):
            where.setdefault(int(mesh.faces[f, k]), (f, k))
    return where


def analytic_dofs(param, val, grad):
    """Global DOFs encoding a scalar function of the layout uv coordinates
    (replicated into all three output coordinates)."""
    mesh = param.mesh
    charts = param.charts
    uv = param.corner_uv
    q = zero_dofs(mesh)
    where = corner_of_vertex(mesh)
    for v, (f, k) in where.items():
        pos = uv[f, k]
        q[3 * v] = val(*pos)
        g = charts.vertex_rotation[f, k] @ grad(*pos)
        q[3 * v + 1] = g[0]
        q[3 * v + 2] = g[1]
    n3 = 3 * len(mesh.vertices)
    for e in range(len(mesh.edges)):
        h = int(mesh.halfedge_of_edge[e])
        f, k = divmod(h, 3)
        a = int(mesh.faces[f, k])
        lo = int(mesh.edges[e, 0])
        uv_a, uv_b = uv[f, k], uv[f, (k + 1) % 3]
        uv_lo, uv_hi = (uv_a, uv_b) if a == lo else (uv_b, uv_a)
        tang = uv_hi - uv_lo
        tang = tang / np.linalg.norm(tang)
        perp = np.array([-tang[1], tang[0]])
        mid = (uv_lo + uv_hi) / 2
        q[n3 + e] = grad(*mid) @ perp
    return q


def flat_param():
    return parameterize(flat_grid(4, 4))


def test_extract_linear_u_gives_edge_differences():
    param = flat_param()
    q = analytic_dofs(param, lambda u, v: u, lambda u, v: np.array([1.0, 0]))
    uv = param.corner_uv
    pairs = [(0, 1), (1, 0), (1, 2), (2, 1), (2, 0), (0, 2)]
    for f in range(0, len(param.mesh.faces), 5):
        q_loc = extract_local_dofs(q, param, f)
        for row, (a, b) in enumerate(pairs, start=3):
            expect = uv[f, b, 0] - uv[f, a, 0]
            assert np.abs(q_loc[row] - expect).max() < 1e-12


def test_extract_zero_is_zero():
    param = flat_param()
    q_loc = extract_local_dofs(zero_dofs(param.mesh), param, 0)
    assert np.abs(q_loc).max() == 0.0


def test_extract_quadratic_midpoint_derivative():
    param = flat_param()
    q = analytic_dofs(param, lambda u, v: u * u,
                      lambda u, v: np.array([2 * u, 0.0]))
    uv = param.corner_uv
    for f in range(0, len(param.mesh.faces), 7):
        q_loc = extract_local_dofs(q, param, f)
        for row, (i, j) in enumerate([(0, 1), (1, 2), (2, 0)], start=9):
            k = 3 - i - j
            mid = (uv[f, i] + uv[f, j]) / 2
            expect = np.array([2 * mid[0], 0.0]) @ (uv[f, k] - mid)
            assert np.abs(q_loc[row] - expect).max() < 1e-10


def test_flat_surface_reproduces_height_field():
    # encode the quadratic height u^2 + v^2 over the flat layout and check
    # the assembled surface reproduces it pointwise
    param = flat_param()
    q = analytic_dofs(param, lambda u, v: u * u + v * v,
                      lambda u, v: np.array([2 * u, 2 * v]))
    patches = build_surface(param, q)
    rng = np.random.default_rng(11)
    uv = param.corner_uv
    for f in range(0, len(param.mesh.faces), 3):
        for _ in range(4):
            b = rng.dirichlet([1, 1, 1])
            pt = b @ uv[f]
            got, _ = eval_uv(patches, f, pt)
            want = pt[0] ** 2 + pt[1] ** 2
            assert np.abs(got - want).max() < 1e-10


# -- continuity -------------------------------------------------------------


def random_global_dofs(param, rng):
    q = rng.normal(scale=0.3, size=(dof_count(param.mesh), 3))
    cone = param.charts.cone_vertex
    g = q[:3 * len(param.mesh.vertices)].reshape(-1, 3, 3)
    g[cone, 1:, :] = 0.0
    return q


def eval_in_child(patches, p_idx, uv_pt):
    """Evaluate a specific sub-patch at a face-uv point, extending the
    polynomial past the child's own domain if necessary."""
    patch = patches.patch(p_idx)
    a, b, c = patch.domain
    m = np.column_stack([b - a, c - a])
    loc = np.linalg.solve(m, uv_pt - a)
    return patch.evaluate(loc[0], loc[1])


def deriv_in_child(patches, p_idx, uv_pt, direction):
    patch = patches.patch(p_idx)
    a, b, c = patch.domain
    m = np.column_stack([b - a, c - a])
    loc = np.linalg.solve(m, uv_pt - a)
    pu, pv = patch.jacobian(loc[0], loc[1])
    dloc = np.linalg.solve(m, direction)
    return pu * dloc[0] + pv * dloc[1]


def test_surface_is_c1_inside_each_face():
    param = parameterize(icosphere(1))
    rng = np.random.default_rng(5)
    q = random_global_dofs(param, rng)
    patches = build_surface(param, q)
    pairs_checked = 0
    for f in range(0, len(param.mesh.faces), 9):
        doms = patches.domain[12 * f:12 * f + 12]
        seen = {}
        for l in range(12):
            for k in range(3):
                p0, p1 = doms[l][k], doms[l][(k + 1) % 3]
                mid = (p0 + p1) / 2
                key = tuple(np.round(mid, 12))
                if key not in seen:
                    seen[key] = (l, p0, p1)
                    continue
                la, q0, q1 = seen[key]
                edge = p1 - p0
                perp = np.array([-edge[1], edge[0]])
                for t in (0.23, 0.61, 0.88):
                    pt = p0 + t * edge
                    va = eval_in_child(patches, 12 * f + la, pt)
                    vb = eval_in_child(patches, 12 * f + l, pt)
                    assert np.abs(va - vb).max() < 1e-10
                    da = deriv_in_child(patches, 12 * f + la, pt, perp)
                    db = deriv_in_child(patches, 12 * f + l, pt, perp)
                    scale = max(1.0, np.abs(da).max())
                    assert np.abs(da - db).max() / scale < 1e-8
                pairs_checked += 1
    assert pairs_checked > 30


def test_surface_is_c1_across_faces():
    param = parameterize(icosphere(1))
    rng = np.random.default_rng(6)
    q = random_global_dofs(param, rng)
    patches = build_surface(param, q)
    mesh = param.mesh
    uv = param.corner_uv
    checked = 0
    for e in range(0, len(mesh.edges), 4):
        h = int(mesh.halfedge_of_edge[e])
        ht = int(mesh.twin[h])
        if ht < 0:
            continue
        f1, k1 = divmod(h, 3)
        f2, k2 = divmod(ht, 3)
        i, j = mesh.edges[e]
        # uv endpoints of the shared edge on both sides, matched by vertex
        def ends(f, k):
            a = int(mesh.faces[f, k])
            ua, ub = uv[f, k], uv[f, (k + 1) % 3]
            return (ua, ub) if a == i else (ub, ua)
        a1, b1 = ends(f1, k1)
        a2, b2 = ends(f2, k2)
        for t in (0.15, 0.4, 0.75, 0.9):
            p1 = a1 + t * (b1 - a1)
            p2 = a2 + t * (b2 - a2)
            v1, _ = eval_uv(patches, f1, p1)
            v2, _ = eval_uv(patches, f2, p2)
            assert np.abs(v1 - v2).max() < 1e-10
            # inward perpendiculars; the two must produce opposite
            # transversal derivatives of equal magnitude
            def inward(f, a, b):
                other = uv[f].sum(axis=0) - a - b
                t_hat = (b - a) / np.linalg.norm(b - a)
                perp = np.array([-t_hat[1], t_hat[0]])
                if perp @ (other - a) < 0:
                    perp = -perp
                return perp
            d1 = deriv_uv(patches, f1, p1, inward(f1, a1, b1))
            d2 = deriv_uv(patches, f2, p2, inward(f2, a2, b2))
            scale = max(1.0, np.abs(d1).max())
            assert np.abs(d1 + d2).max() / scale < 1e-8
            checked += 1
    assert checked > 40


# -- cone patches -----------------------------------------------------------


def test_cone_patch_rays_are_straight():
    apex = np.array([1.0, 2.0, 3.0])
    patch = make_cone_patch(apex, np.array([1.0, 0, 1]),
                            np.array([0.0, 1, 1]), np.array([0.0, 0, 1]))
    assert np.allclose(patch.control[3], apex)
    assert np.allclose(patch.control[4], apex)
    rng = np.random.default_rng(2)
    for _ in range(5):
        a, b = rng.random(2)
        pts = np.stack([patch.evaluate(t * a, t * b)
                        for t in (0.25, 0.5, 0.75, 1.0)]) - apex
        norms = np.linalg.norm(pts, axis=1)
        dirs = pts / norms[:, None]
        assert np.abs(dirs - dirs[0]).max() < 1e-12


def test_cone_patch_planar_when_deltas_coplanar():
    apex = np.zeros(3)
    d1 = np.array([1.0, 0.0, 0.5])
    d2 = np.array([0.0, 1.0, -0.25])
    patch = make_cone_patch(apex, d1, d2, 0.3 * d1 + 0.2 * d2)
    n = np.cross(d1, d2)
    for u, v in [(0.3, 0.3), (0.1, 0.6), (0.7, 0.1)]:
        assert abs(patch.evaluate(u, v) @ n) < 1e-12


def test_cone_patch_apex_normal_vanishes():
    patch = make_cone_patch(np.zeros(3), np.array([1.0, 0, 1]),
                            np.array([0.0, 1, 1]), np.zeros(3))
    assert np.allclose(patch.normal(0.0, 0.0), 0.0)
    assert np.linalg.norm(patch.normal(0.5, 0.25)) > 0


def test_cone_corner_control_points_collapse():
    param = parameterize(icosphere(1))
    rng = np.random.default_rng(8)
    q = random_global_dofs(param, rng)
    patches = build_surface(param, q)
    mesh = param.mesh
    cone = param.charts.cone_vertex
    found = 0
    for f in range(len(mesh.faces)):
        for k in range(3):
            v = int(mesh.faces[f, k])
            if not cone[v]:
                continue
            # children 2k and 2k+1 have their p00 corner at this vertex
            for l in (2 * k, 2 * k + 1):
                c = patches.control[12 * f + l]
                assert np.allclose(c[3], c[0])
                assert np.allclose(c[4], c[0])
                assert np.allclose(c[0], q[3 * v])
            found += 1
    assert found > 0


def test_nonzero_cone_gradient_is_rejected():
    param = parameterize(icosphere(1))
    q = zero_dofs(param.mesh)
    v = int(np.flatnonzero(param.charts.cone_vertex)[0])
    q[3 * v + 1] = [1.0, 0.0, 0.0]
    with pytest.raises(SurfaceError):
        build_surface(param, q)


# -- bookkeeping ------------------------------------------------------------


def test_face_dof_rows_shape():
    param = flat_param()
    rows = face_dof_rows(param.mesh, 0)
    assert rows.shape == (12,)
    assert len(np.unique(rows)) == 12


def test_patch_dump_roundtrip(tmp_path):
    from quadcontour.surface import load_patch_arrays
    param = flat_param()
    q = analytic_dofs(param, lambda u, v: u + v,
                      lambda u, v: np.array([1.0, 1.0]))
    patches = build_surface(param, q)
    path = tmp_path / "patches.json"
    save_patches(patches, str(path))
    control, domain = load_patch_arrays(str(path))
    assert np.allclose(control, patches.control)
    assert np.allclose(domain, patches.domain)
