"""Cameras and the reduction of perspective views to orthographic ones.

A perspective camera is handled by mapping every mesh vertex from camera
coordinates ``[x, y, z]`` to ``[x/z, y/z, -1/z]``.  Straight lines through
the eye become vertical lines under this map, so an orthographic view of
the transformed mesh along ``[0, 0, 1]`` shows exactly the perspective
image of the original, and the third coordinate still orders points by
distance from the eye.  The map has to be applied to the mesh before any
surface is fitted, which is what makes the fitted surface view-dependent.

Camera frames here put image x to the right and image y downward (the
raster convention), with depth growing into the scene; the frame is a
pure rotation, so mesh orientation survives the change of coordinates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

log = logging.getLogger(__name__)

# Relative near-plane distance: vertices closer to the eye than this
# fraction of the mesh bounding-box diagonal are treated as errors.
NEAR_PLANE_FRACTION = 1e-4

# Angle of the deterministic general-position nudge, in radians.
PERTURBATION_ANGLE = 1e-6


class ViewError(Exception):
    """A camera or view transform could not be applied."""

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


@dataclass(frozen=True)
class Camera:
    """A perspective or orthographic camera.

    position, target and up are world-space vectors; ``mode`` is either
    ``"perspective"`` (with a vertical field of view in degrees) or
    ``"orthographic"`` (the view direction is target - position and the
    distance to the target carries no meaning).
    """

    position: np.ndarray
    target: np.ndarray
    up: np.ndarray
    mode: str = "perspective"
    fov_degrees: float = 45.0

    def __post_init__(self):
        for name in ("position", "target", "up"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,):
                raise ViewError(f"camera {name} must be a 3-vector",
                                shape=v.shape)
            object.__setattr__(self, name, v)
        if self.mode not in ("perspective", "orthographic"):
            raise ViewError("unknown camera mode", mode=self.mode)
        forward = self.target - self.position
        if np.linalg.norm(forward) == 0.0:
            raise ViewError("camera position and target coincide")
        if np.linalg.norm(np.cross(self.up, forward)) <= 0.0:
            raise ViewError("camera up vector is parallel to the view "
                            "direction")
        if self.mode == "perspective" and not 0.0 < self.fov_degrees < 179.0:
            raise ViewError("field of view out of range",
                            fov_degrees=self.fov_degrees)

    @property
    def direction(self):
        """Unit view direction, from the eye into the scene."""
        forward = self.target - self.position
        return forward / np.linalg.norm(forward)


def orthographic_camera(direction, up=None, distance=1.0):
    """Camera looking along ``direction`` at the origin from ``distance``."""
    direction = np.asarray(direction, dtype=float)
    n = np.linalg.norm(direction)
    if n == 0.0:
        raise ViewError("view direction must be nonzero")
    direction = direction / n
    if up is None:
        # any vector not parallel to the direction will do
        up = np.array([0.0, 1.0, 0.0])
        if abs(direction[1]) > 0.9:
            up = np.array([0.0, 0.0, 1.0])
    return Camera(position=-distance * direction,
                  target=np.zeros(3), up=up, mode="orthographic")


def camera_frame(camera):
    """Rotation with rows (right, down, forward), mapping world to view.

    The rows are orthonormal and the determinant is +1: image y points
    down on screen, which keeps the frame orientation-preserving while
    depth grows into the scene.
    """
    forward = camera.direction
    right = np.cross(forward, camera.up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward])


def transform_orthographic(positions, camera):
    """Rotate positions into the camera frame; view direction is [0,0,1].

    Returns the rotated positions and the orthographic view vector.  The
    transform is a pure rotation about the camera target, so depths are
    the signed distances along the view direction.
    """
    positions = np.asarray(positions, dtype=float)
    frame = camera_frame(camera)
    return (positions - camera.target) @ frame.T, np.array([0.0, 0.0, 1.0])


def transform_perspective(positions, camera, z_near=None):
    """Map positions to [x/z, y/z, -1/z] in camera coordinates.

    Every vertex must lie strictly in front of the eye: any camera-space
    depth at or below ``z_near`` (by default a small fraction of the
    bounding-box diagonal) raises ViewError carrying the offending vertex
    indices, because clipping a mesh that pokes through the near plane is
    out of scope.  Returns the transformed positions and the orthographic
    view vector [0, 0, 1]; the third coordinate -1/z is increasing in z,
    so depth order is preserved.
    """
    positions = np.asarray(positions, dtype=float)
    frame = camera_frame(camera)
    local = (positions - camera.position) @ frame.T
    if z_near is None:
        extent = positions.max(axis=0) - positions.min(axis=0)
        z_near = NEAR_PLANE_FRACTION * np.linalg.norm(extent)
    z = local[:, 2]
    behind = np.flatnonzero(z <= z_near)
    if behind.size:
        raise ViewError(
            f"{behind.size} vertices at or behind the near plane",
            vertices=behind.tolist(), z_near=float(z_near))
    out = np.empty_like(local)
    out[:, 0] = local[:, 0] / z
    out[:, 1] = local[:, 1] / z
    out[:, 2] = -1.0 / z
    return out, np.array([0.0, 0.0, 1.0])


def transform_view(positions, camera):
    """Apply the camera's transform: positions and view vector [0,0,1]."""
    if camera.mode == "perspective":
        return transform_perspective(positions, camera)
    return transform_orthographic(positions, camera)


def _rotation_about(axis, angle):
    """Rodrigues rotation matrix about a unit axis."""
    k = np.asarray(axis, dtype=float)
    kx = np.array([[0.0, -k[2], k[1]],
                   [k[2], 0.0, -k[0]],
                   [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * kx @ kx


def perturbation_rotation(seed):
    """Tiny seeded rotation used to knock a view off exact alignments.

    The axis is drawn uniformly from the sphere and the angle is fixed at
    PERTURBATION_ANGLE, so the same seed always yields the same rotation.
    """
    rng = np.random.default_rng(seed)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return _rotation_about(axis, PERTURBATION_ANGLE)


def perturb_view(view, seed):
    """Nudge a view direction or camera into general position.

    ``view`` may be a direction vector (returned rotated and normalized)
    or a Camera (returned with its target and up rotated about the eye).
    Contour extraction assumes the view direction is not exactly aligned
    with tangents of flat surface regions; a rotation of a microradian is
    far below visible difference but breaks those coincidences.
    """
    rot = perturbation_rotation(seed)
    if isinstance(view, Camera):
        offset = rot @ (view.target - view.position)
        return replace(view, target=view.position + offset,
                       up=rot @ view.up)
    direction = np.asarray(view, dtype=float)
    out = rot @ direction
    return out / np.linalg.norm(out)


def camera_to_dict(camera, seed=None):
    """JSON-ready description of a camera, optionally with its seed."""
    out = {
        "position": camera.position.tolist(),
        "target": camera.target.tolist(),
        "up": camera.up.tolist(),
        "mode": camera.mode,
    }
    if camera.mode == "perspective":
        out["fov_degrees"] = float(camera.fov_degrees)
    if seed is not None:
        out["seed"] = int(seed)
    return out


def camera_from_dict(data):
    """Build a Camera from a parsed JSON object.

    Accepts either the full form produced by camera_to_dict or a compact
    orthographic form with just a "direction" key.
    """
    if "direction" in data:
        return orthographic_camera(np.asarray(data["direction"], dtype=float),
                                   up=data.get("up"))
    try:
        position = np.asarray(data["position"], dtype=float)
        target = np.asarray(data["target"], dtype=float)
    except KeyError as missing:
        raise ViewError("camera description lacks a required field",
                        field=str(missing)) from None
    up = np.asarray(data.get("up", [0.0, 1.0, 0.0]), dtype=float)
    mode = data.get("mode", "perspective")
    camera = Camera(position=position, target=target, up=up, mode=mode,
                    fov_degrees=float(data.get("fov_degrees", 45.0)))
    return camera
