import numpy as np
import pytest

from quadcontour.fit import (
    FitError,
    assemble,
    load_energy_system,
    precompute,
    save_energy_system,
    smoothing_energy,
    solve_view,
    total_energy,
    with_weight,
)
from quadcontour.param import parameterize
from quadcontour.shapes import flat_grid, icosphere
from quadcontour.surface import build_surface

from test_surface import analytic_dofs, random_global_dofs


# 7-point degree-5 rule on the unit triangle, barycentric points + weights
_S15 = np.sqrt(15.0)
_QPTS = np.array(
    [[1 / 3, 1 / 3, 1 / 3]]
    + [np.roll([1 - 2 * a, a, a], i) for a in [(6 - _S15) / 21]
       for i in range(3)]
    + [np.roll([1 - 2 * b, b, b], i) for b in [(6 + _S15) / 21]
       for i in range(3)])
_QWTS = np.array([9 / 40] + [(155 - _S15) / 1200] * 3
                 + [(155 + _S15) / 1200] * 3)


def patch_quadrature_energy(patch):
    """Integrate the squared local Hessian of one patch over its reference
    triangle, with second derivatives taken by central differences of the
    evaluator (exact for quadratics up to roundoff)."""
    h = 0.05
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    acc = 0.0
    for bary, wq in zip(_QPTS, _QWTS):
        s, t = bary @ corners

        def ev(ds, dt):
            return np.asarray(patch.evaluate(s + ds, t + dt))

        center = ev(0, 0)
        pss = (ev(h, 0) - 2 * center + ev(-h, 0)) / h**2
        ptt = (ev(0, h) - 2 * center + ev(0, -h)) / h**2
        pst = (ev(h, h) - ev(h, -h) - ev(-h, h) + ev(-h, -h)) / (4 * h**2)
        acc += wq * ((pss**2).sum() + (ptt**2).sum() + 2 * (pst**2).sum())
    return 0.5 * acc  # reference triangle area


def quadrature_energy(patches, n_faces):
    return sum(patch_quadrature_energy(patches.patch(p))
               for p in range(12 * n_faces))


@pytest.fixture(scope="module")
def sphere_system():
    param = parameterize(icosphere(1))
    return precompute(assemble(param))


@pytest.fixture(scope="module")
def flat_system():
    param = parameterize(flat_grid(3, 3))
    return precompute(assemble(param))


def test_linear_dofs_have_zero_smoothing_energy(flat_system):
    param = flat_system.param
    q = analytic_dofs(param, lambda u, v: 2 * u - v + 1,
                      lambda u, v: np.array([2.0, -1.0]))
    scale = float(np.abs(q).max()) ** 2
    assert smoothing_energy(flat_system, q) < 1e-12 * scale


def test_usquared_integrand_is_four():
    # a single patch carrying s^2: p_ss = 2, so the energy density is 4
    # and the integral is 4 times the domain area
    from quadcontour.surface import QuadraticPatch
    control = np.zeros((6, 3))
    control[1, 0] = 1.0  # p20: p(s,t) = (s^2, 0, 0)
    patch = QuadraticPatch(control, np.array([[0.0, 0], [1, 0], [0, 1]]))
    got = patch_quadrature_energy(patch)
    assert abs(got - 4 * 0.5) < 1e-12


@pytest.mark.parametrize("maker", [lambda: flat_grid(2, 2),
                                   lambda: icosphere(0)])
def test_smoothing_matches_quadrature(maker):
    param = parameterize(maker())
    system = assemble(param)
    rng = np.random.default_rng(13)
    q = random_global_dofs(param, rng)
    patches = build_surface(param, q)
    want = quadrature_energy(patches, len(param.mesh.faces))
    got = smoothing_energy(system, q)
    assert abs(got - want) < 1e-10 * max(1.0, want)


def test_smoothing_matrix_symmetric(sphere_system):
    d = sphere_system.smoothing - sphere_system.smoothing.T
    assert abs(d).max() == 0.0


def test_solve_residual_small(sphere_system):
    system = sphere_system
    n = len(system.param.mesh.vertices)
    q = solve_view(system, system.param.mesh.vertices)
    from scipy import sparse
    h = system.smoothing + sparse.diags(system.weight * system.fitting_diag)
    rhs = np.zeros((system.size, 3))
    rhs[0:3 * n:3] = (system.weight * system.fitting_diag[0:3 * n:3, None]
                      * system.param.mesh.vertices)
    keep = system.keep
    res = h[keep][:, keep] @ q[keep] - rhs[keep]
    assert np.linalg.norm(res) < 1e-10 * np.linalg.norm(rhs[keep])


def test_optimality_gradient(sphere_system):
    system = sphere_system
    n = len(system.param.mesh.vertices)
    q = solve_view(system, system.param.mesh.vertices)
    from scipy import sparse
    h = system.smoothing + sparse.diags(system.weight * system.fitting_diag)
    rhs = np.zeros((system.size, 3))
    rhs[0:3 * n:3] = (system.weight * system.fitting_diag[0:3 * n:3, None]
                      * system.param.mesh.vertices)
    grad = 2 * (h @ q - rhs)
    assert np.abs(grad[system.keep]).max() < 1e-9


def test_energy_not_above_template(sphere_system):
    system = sphere_system
    n = len(system.param.mesh.vertices)
    pos = system.param.mesh.vertices
    q0 = np.zeros((system.size, 3))
    q0[0:3 * n:3] = pos
    q = solve_view(system, pos)
    assert total_energy(system, q, pos) <= total_energy(system, q0, pos)


def test_plane_is_reproduced_exactly(flat_system):
    system = flat_system
    pos = system.param.mesh.vertices
    assert np.abs(pos[:, 2]).max() == 0.0
    q = solve_view(system, pos)
    n = len(pos)
    dev = np.abs(q[0:3 * n:3] - pos).max()
    assert dev < 1e-9
    assert smoothing_energy(system, q) < 1e-16


def test_deviation_shrinks_with_weight(sphere_system):
    pos = sphere_system.param.mesh.vertices
    n = len(pos)

    def max_dev(system):
        q = solve_view(system, pos)
        return np.linalg.norm(q[0:3 * n:3] - pos, axis=1).max()

    d1 = max_dev(sphere_system)
    d10 = max_dev(precompute(with_weight(sphere_system, 10.0)))
    assert np.isfinite(d1) and d1 > 0
    assert d10 < d1


def test_two_views_share_factorization(sphere_system):
    system = sphere_system
    pos = system.param.mesh.vertices
    rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    factor_before = system.factor
    q1 = solve_view(system, pos)
    q2 = solve_view(system, pos @ rot.T)
    assert system.factor is factor_before
    assert not np.allclose(q1, q2)


def test_zero_weight_exercises_regularization():
    param = parameterize(flat_grid(2, 2))
    system = with_weight(assemble(param), 0.0)
    try:
        precompute(system)
    except FitError:
        return
    assert system.regularized


def test_assembly_is_deterministic():
    param = parameterize(icosphere(0))
    a = assemble(param)
    b = assemble(param)
    assert np.array_equal(a.smoothing.data, b.smoothing.data)
    assert np.array_equal(a.smoothing.indices, b.smoothing.indices)
    assert np.array_equal(a.fitting_diag, b.fitting_diag)


def test_cone_gradients_solved_to_zero(sphere_system):
    system = sphere_system
    q = solve_view(system, system.param.mesh.vertices)
    cone = np.flatnonzero(system.param.charts.cone_vertex)
    assert np.abs(q[3 * cone + 1]).max() == 0.0
    assert np.abs(q[3 * cone + 2]).max() == 0.0


def test_solve_rejects_bad_shape(sphere_system):
    with pytest.raises(FitError):
        solve_view(sphere_system, np.zeros((4, 3)))


def test_cache_roundtrip(tmp_path, sphere_system):
    system = sphere_system
    path = str(tmp_path / "energy.npz")
    save_energy_system(system, path)
    loaded = precompute(load_energy_system(path))
    assert loaded.weight == system.weight
    assert np.allclose(loaded.smoothing.toarray(),
                       system.smoothing.toarray())
    pos = system.param.mesh.vertices
    assert np.allclose(solve_view(loaded, pos), solve_view(system, pos),
                       atol=1e-12)
    with pytest.raises(FitError):
        load_energy_system(path, expected_digest="somethingelse")
