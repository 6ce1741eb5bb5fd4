"""Tests for camera frames, the perspective reduction, and view nudges."""

import numpy as np
import pytest

from quadcontour.view import (
    Camera,
    ViewError,
    camera_frame,
    camera_from_dict,
    camera_to_dict,
    orthographic_camera,
    perturb_view,
    transform_orthographic,
    transform_perspective,
    transform_view,
)


def _axis_camera():
    """Camera whose frame is the world frame (looks along +z, y down)."""
    return Camera(position=np.zeros(3), target=np.array([0.0, 0.0, 1.0]),
                  up=np.array([0.0, -1.0, 0.0]))


def test_projective_formula_on_axis_camera():
    cam = _axis_camera()
    pts = np.array([[1.0, 2.0, 4.0], [0.0, 0.0, 1.0]])
    out, tau = transform_perspective(pts, cam, z_near=1e-8)
    assert np.allclose(tau, [0.0, 0.0, 1.0])
    assert np.allclose(out[0], [0.25, 0.5, -0.25])
    assert np.allclose(out[1], [0.0, 0.0, -1.0])


def test_points_on_one_ray_share_image_position():
    cam = _axis_camera()
    ray = np.array([0.3, -0.2, 1.0])
    pts = np.stack([ray, 2.0 * ray])
    out, _ = transform_perspective(pts, cam, z_near=1e-8)
    assert np.allclose(out[0, :2], out[1, :2])
    # z=1 is closer than z=2 and must come out with the smaller depth
    assert out[0, 2] < out[1, 2]
    assert np.allclose(out[:, 2], [-1.0, -0.5])


def test_depth_is_monotone_in_distance():
    cam = _axis_camera()
    z = np.linspace(0.5, 50.0, 40)
    pts = np.column_stack([np.zeros_like(z), np.zeros_like(z), z])
    out, _ = transform_perspective(pts, cam)
    assert np.all(np.diff(out[:, 2]) > 0.0)


def test_vertices_behind_camera_are_rejected():
    cam = _axis_camera()
    pts = np.array([[0.0, 0.0, 2.0], [0.0, 0.0, -1.0], [1.0, 0.0, 1e-9]])
    with pytest.raises(ViewError) as err:
        transform_perspective(pts, cam)
    assert err.value.details["vertices"] == [1, 2]


def test_camera_frame_is_a_rotation():
    rng = np.random.default_rng(7)
    for _ in range(20):
        cam = Camera(position=rng.normal(size=3),
                     target=rng.normal(size=3),
                     up=rng.normal(size=3))
        frame = camera_frame(cam)
        assert np.allclose(frame @ frame.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(frame) == pytest.approx(1.0)
        # third row is the unit view direction
        assert np.allclose(frame[2], cam.direction)


def test_orthographic_transform_preserves_distances():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(30, 3))
    cam = orthographic_camera([1.0, -2.0, 0.5])
    out, tau = transform_orthographic(pts, cam)
    assert np.allclose(tau, [0.0, 0.0, 1.0])
    d_in = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
    d_out = np.linalg.norm(out[:, None] - out[None, :], axis=-1)
    assert np.allclose(d_in, d_out)
    # depths are signed distances along the view direction
    assert np.allclose(out[:, 2], pts @ cam.direction)


def test_transform_view_dispatches_on_mode():
    pts = np.array([[0.0, 0.0, 2.0], [0.5, 0.5, 3.0]])
    persp, _ = transform_view(pts, _axis_camera())
    ortho, _ = transform_view(pts, orthographic_camera([0.0, 0.0, 1.0]))
    assert np.allclose(persp[0, 2], -0.5)
    assert np.allclose(ortho[:, 2], pts[:, 2])


def test_far_perspective_approaches_orthographic():
    rng = np.random.default_rng(11)
    pts = rng.uniform(-1.0, 1.0, size=(50, 3))
    direction = np.array([0.2, -0.4, 1.0]) / np.linalg.norm([0.2, -0.4, 1.0])
    far = 1e6
    cam = Camera(position=-far * direction, target=np.zeros(3),
                 up=np.array([0.0, 1.0, 0.0]), fov_degrees=0.01)
    ortho = orthographic_camera(direction, up=np.array([0.0, 1.0, 0.0]))
    persp, _ = transform_perspective(pts, cam)
    flat, _ = transform_orthographic(pts, ortho)
    # image coordinates agree after undoing the 1/distance scaling
    assert np.allclose(persp[:, :2] * far, flat[:, :2], atol=1e-4)


def test_sphere_silhouette_after_transform():
    """The transformed contour of a sphere is the known perspective one."""
    r, dist = 1.0, 5.0
    cam = _axis_camera()
    center = np.array([0.0, 0.0, dist])
    axial = (dist ** 2 - r ** 2) / dist
    rho = r * np.sqrt(dist ** 2 - r ** 2) / dist
    theta = np.linspace(0.0, 2.0 * np.pi, 24, endpoint=False)
    ring = np.column_stack([rho * np.cos(theta), rho * np.sin(theta),
                            np.full_like(theta, axial)])
    out, tau = transform_perspective(ring, cam, z_near=1e-8)
    image_radius = np.linalg.norm(out[:, :2], axis=1)
    assert np.allclose(image_radius, r / np.sqrt(dist ** 2 - r ** 2))

    def transformed(p):
        q, _ = transform_perspective(p[None, :], cam, z_near=1e-8)
        return q[0]

    # the transformed surface normal is orthogonal to the view vector all
    # along the ring, and clearly not at the point facing the camera
    def normal_dot_tau(p):
        radial = (p - center) / r
        t1 = np.cross(radial, [0.0, 0.0, 1.0])
        if np.linalg.norm(t1) < 1e-12:
            t1 = np.cross(radial, [1.0, 0.0, 0.0])
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(radial, t1)
        h = 1e-5
        du = (transformed(p + h * t1) - transformed(p - h * t1)) / (2 * h)
        dv = (transformed(p + h * t2) - transformed(p - h * t2)) / (2 * h)
        n = np.cross(du, dv)
        return np.dot(n, tau) / np.linalg.norm(n)

    for p in ring:
        assert abs(normal_dot_tau(p)) < 1e-5
    nose = center - np.array([0.0, 0.0, r])
    assert abs(normal_dot_tau(nose)) > 0.1


def test_perturbation_is_small_unit_and_deterministic():
    tau = np.array([0.0, 0.0, 1.0])
    for seed in range(100):
        moved = perturb_view(tau, seed)
        assert np.linalg.norm(moved) == pytest.approx(1.0)
        assert np.linalg.norm(moved - tau) <= 1e-6 + 1e-12
    assert np.array_equal(perturb_view(tau, 0), perturb_view(tau, 0))
    assert not np.array_equal(perturb_view(tau, 0), perturb_view(tau, 1))


def test_perturbing_a_camera_moves_the_view_direction_slightly():
    cam = Camera(position=np.array([3.0, 1.0, -2.0]),
                 target=np.zeros(3), up=np.array([0.0, 1.0, 0.0]))
    moved = perturb_view(cam, seed=42)
    assert isinstance(moved, Camera)
    assert np.array_equal(moved.position, cam.position)
    assert np.linalg.norm(moved.direction - cam.direction) <= 1e-6 + 1e-12
    assert np.linalg.norm(moved.direction - cam.direction) > 0.0
    # distance to the target and the up length are preserved
    assert np.linalg.norm(moved.target - moved.position) == pytest.approx(
        np.linalg.norm(cam.target - cam.position))
    assert np.linalg.norm(moved.up) == pytest.approx(np.linalg.norm(cam.up))


def test_camera_dict_roundtrip():
    cam = Camera(position=np.array([1.0, 2.0, 3.0]),
                 target=np.array([0.0, 0.5, 0.0]),
                 up=np.array([0.0, 1.0, 0.0]), fov_degrees=30.0)
    back = camera_from_dict(camera_to_dict(cam, seed=9))
    assert np.array_equal(back.position, cam.position)
    assert np.array_equal(back.target, cam.target)
    assert back.mode == "perspective"
    assert back.fov_degrees == 30.0
    compact = camera_from_dict({"direction": [0.0, 0.0, 1.0]})
    assert compact.mode == "orthographic"
    assert np.allclose(compact.direction, [0.0, 0.0, 1.0])
    with pytest.raises(ViewError):
        camera_from_dict({"position": [0.0, 0.0, 0.0]})


def test_invalid_cameras_are_rejected():
    with pytest.raises(ViewError):
        Camera(position=np.zeros(3), target=np.zeros(3),
               up=np.array([0.0, 1.0, 0.0]))
    with pytest.raises(ViewError):
        Camera(position=np.zeros(3), target=np.array([0.0, 0.0, 1.0]),
               up=np.array([0.0, 0.0, 2.0]))
    with pytest.raises(ViewError):
        Camera(position=np.zeros(3), target=np.array([0.0, 0.0, 1.0]),
               up=np.array([0.0, 1.0, 0.0]), fov_degrees=0.0)
    with pytest.raises(ViewError):
        Camera(position=np.zeros(3), target=np.array([0.0, 0.0, 1.0]),
               up=np.array([0.0, 1.0, 0.0]), mode="fisheye")
