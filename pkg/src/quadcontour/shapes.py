"""Procedural meshes for tests and demos."""

from __future__ import annotations

import numpy as np

from quadcontour.mesh import Mesh


def tetrahedron() -> Mesh:
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]],
                 dtype=np.float64)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]], dtype=np.int64)
    return Mesh(v, f)


def cube() -> Mesh:
    v = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0)
                  for z in (0.0, 1.0)])
    quads = [
        (0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1),
        (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3),
    ]
    f = []
    for a, b, c, d in quads:
        f.append([a, b, c])
        f.append([a, c, d])
    return Mesh(v, np.array(f, dtype=np.int64))


def icosahedron() -> Mesh:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    v /= np.linalg.norm(v[0])
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return Mesh(v, f)


def _subdivide_once(mesh: Mesh, project_unit: bool) -> Mesh:
    mids: dict[tuple[int, int], int] = {}
    verts = [p for p in mesh.vertices]

    def midpoint(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        m = mids.get(key)
        if m is None:
            p = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
            if project_unit:
                p = p / np.linalg.norm(p)
            m = len(verts)
            verts.append(p)
            mids[key] = m
        return m

    faces = []
    for a, b, c in mesh.faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        faces.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]])
    return Mesh(np.array(verts), np.array(faces, dtype=np.int64))


def icosphere(level: int, radius: float = 1.0) -> Mesh:
    """Subdivided icosahedron projected to the unit sphere; 20 * 4^level faces."""
    m = icosahedron()
    for _ in range(level):
        m = _subdivide_once(m, project_unit=True)
    return Mesh(m.vertices * radius, m.faces)


def organic_blob(level: int = 3, seed: int = 7) -> Mesh:
    """Genus-0 mesh with a smooth, asymmetric radial displacement field."""
    base = icosphere(level)
    rng = np.random.default_rng(seed)
    terms = []
    for _ in range(6):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        terms.append((d, rng.uniform(1.0, 3.0), rng.uniform(0.05, 0.22),
                      rng.uniform(0, 2 * np.pi)))
    r = np.ones(len(base.vertices))
    for d, freq, amp, phase in terms:
        r += amp * np.sin(freq * base.vertices @ d + phase)
    return Mesh(base.vertices * r[:, None], base.faces)


def torus(major: float = 1.0, minor: float = 0.4,
          n_major: int = 48, n_minor: int = 24,
          minor_offset: float = 0.37) -> Mesh:
    verts = np.empty((n_major * n_minor, 3))
    for i in range(n_major):
        phi = 2 * np.pi * i / n_major
        for j in range(n_minor):
            # the odd default offset breaks the up-down mirror symmetry,
            # so an axis-aligned view cuts triangle interiors rather than
            # the vertices, edge midpoints and split points a symmetric
            # ring would place exactly on the silhouette
            theta = 2 * np.pi * (j + minor_offset) / n_minor
            rad = major + minor * np.cos(theta)
            verts[i * n_minor + j] = (rad * np.cos(phi), rad * np.sin(phi),
                                      minor * np.sin(theta))
    faces = []
    for i in range(n_major):
        i2 = (i + 1) % n_major
        for j in range(n_minor):
            j2 = (j + 1) % n_minor
            a = i * n_minor + j
            b = i2 * n_minor + j
            c = i2 * n_minor + j2
            d = i * n_minor + j2
            faces.append([a, b, c])
            faces.append([a, c, d])
    return Mesh(verts, np.array(faces, dtype=np.int64))


def open_cylinder(radius: float = 0.5, height: float = 2.0,
                  n_around: int = 32, n_along: int = 8) -> Mesh:
    """Axis-aligned tube without caps (two boundary loops)."""
    verts = []
    for k in range(n_along + 1):
        z = height * k / n_along - height / 2
        for i in range(n_around):
            a = 2 * np.pi * i / n_around
            verts.append([radius * np.cos(a), radius * np.sin(a), z])
    faces = []
    for k in range(n_along):
        for i in range(n_around):
            i2 = (i + 1) % n_around
            a = k * n_around + i
            b = k * n_around + i2
            c = (k + 1) * n_around + i2
            d = (k + 1) * n_around + i
            faces.append([a, b, c])
            faces.append([a, c, d])
    return Mesh(np.array(verts), np.array(faces, dtype=np.int64))


def flat_grid(nx: int = 8, ny: int = 8, spike: int | None = None,
              spike_height: float = 1.0) -> Mesh:
    """Planar grid in z=0, optionally with one vertex pulled out of plane."""
    verts = np.array([[x / nx, y / ny, 0.0]
                      for y in range(ny + 1) for x in range(nx + 1)])
    if spike is not None:
        verts[spike, 2] = spike_height
    faces = []
    for y in range(ny):
        for x in range(nx):
            a = y * (nx + 1) + x
            b = a + 1
            c = a + nx + 2
            d = a + nx + 1
            faces.append([a, b, c])
            faces.append([a, c, d])
    return Mesh(verts, np.array(faces, dtype=np.int64))


def uv_sphere(n_lat: int, n_lon: int, radius: float = 1.0) -> Mesh:
    """Latitude-longitude sphere with pole fans; 2 * n_lon * (n_lat - 1) faces."""
    verts = [np.array([0.0, 0.0, radius])]
    for i in range(1, n_lat):
        th = np.pi * i / n_lat
        for j in range(n_lon):
            ph = 2 * np.pi * j / n_lon
            verts.append(np.array([radius * np.sin(th) * np.cos(ph),
                                   radius * np.sin(th) * np.sin(ph),
                                   radius * np.cos(th)]))
    verts.append(np.array([0.0, 0.0, -radius]))
    south = len(verts) - 1
    idx = lambda i, j: 1 + (i - 1) * n_lon + j % n_lon
    faces = []
    for j in range(n_lon):
        faces.append([0, idx(1, j), idx(1, j + 1)])
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = idx(i, j), idx(i, j + 1)
            c, d = idx(i + 1, j + 1), idx(i + 1, j)
            faces.append([a, d, c])
            faces.append([a, c, b])
    for j in range(n_lon):
        faces.append([south, idx(n_lat - 1, j + 1), idx(n_lat - 1, j)])
    return Mesh(np.array(verts), np.array(faces, dtype=np.int64))


def two_spheres(level: int = 2) -> Mesh:
    """Two disjoint spheres, the smaller one in front along +z.

    Both spheres are tipped by a fixed skew rotation: the icosahedron
    has mirror planes through the coordinate axes, and an untipped
    axis-aligned view would run the silhouette exactly through
    subdivision vertices.
    """
    from scipy.spatial.transform import Rotation

    rot = Rotation.from_euler("xyz", [0.31, 0.24, 0.17]).as_matrix()
    back = icosphere(level)
    front = icosphere(level, radius=0.55)
    fv = front.vertices @ rot.T + np.array([0.35, 0.1, 2.2])
    verts = np.vstack([back.vertices @ rot.T, fv])
    faces = np.vstack([back.faces, front.faces + len(back.vertices)])
    return Mesh(verts, faces)


def genus2() -> Mesh:
    """Closed genus-2 surface built by joining two tori along a removed face.

    Resolution and tube radius are chosen so the junction stays well shaped;
    much coarser variants concentrate curvature badly enough that the
    flattening stage rejects them.
    """
    # unshifted rings keep the glued seam well shaped
    t1 = torus(minor=0.55, n_major=28, n_minor=14, minor_offset=0.0)
    t2 = torus(minor=0.55, n_major=28, n_minor=14, minor_offset=0.0)
    off = np.array([2.5, 0.0, 0.0])

    def boundary_of_removed(mesh: Mesh, face: int):
        keep = np.ones(len(mesh.faces), dtype=bool)
        keep[face] = False
        return mesh.faces[face].tolist(), mesh.faces[keep]

    tri1, f1 = boundary_of_removed(t1, 0)
    tri2, f2 = boundary_of_removed(t2, 0)
    v2 = t2.vertices + off
    # flip the second torus so the glued seam is consistently oriented
    f2 = f2[:, ::-1]
    n1 = len(t1.vertices)
    for perm in ((0, 2, 1), (1, 0, 2), (2, 1, 0), (0, 1, 2), (1, 2, 0),
                 (2, 0, 1)):
        mapping = {tri2[perm[k]] + n1: tri1[k] for k in range(3)}
        faces = np.vstack([f1, f2 + n1])
        flat = faces.ravel().copy()
        for old, new in mapping.items():
            flat[flat == old] = new
        faces = flat.reshape(-1, 3)
        used = np.zeros(n1 + len(v2), dtype=bool)
        used[faces.ravel()] = True
        remap = np.cumsum(used) - 1
        verts = np.vstack([t1.vertices, v2])[used]
        try:
            mesh = Mesh(verts, remap[faces])
        except Exception:
            continue
        if mesh.is_closed() and mesh.genus() == 2:
            return mesh
    raise RuntimeError("failed to build a genus-2 mesh")
