"""Thin-plate fitting of the quadratic surface to mesh positions.

The surface DOFs minimize a smoothing energy plus a weighted squared
deviation of the vertex position DOFs from given targets.  Both terms are
quadratic, so a view amounts to one sparse solve against a precomputed
factorization; only the right-hand side depends on the (transformed)
vertex positions.

The smoothing term integrates the squared second derivatives of every
sub-patch over its own reference triangle.  Measuring each patch in its
reference frame makes the energy invariant under uniform rescaling of the
layout, so the arbitrary global scale of the flattening cannot tip the
balance between smoothing and fitting, and the same weight behaves alike
across meshes.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from quadcontour.param import (SeamedParameterization,
                               parameterization_from_payload,
                               parameterization_payload)
from quadcontour.surface import (CANONICAL_DOMAINS, CONTROL_TABLES,
                                 local_dof_matrices)

logger: logging.Logger = logging.getLogger(__name__)

# second derivatives (p_ss, p_tt, p_st) of a quadratic Bezier triangle as
# rows over its control points (p00, p20, p02, p10, p01, p11)
HESSIAN_FROM_CONTROL = 2.0 * np.array([
    [1.0, 1.0, 0.0, -2.0, 0.0, 0.0],
    [1.0, 0.0, 1.0, 0.0, -2.0, 0.0],
    [1.0, 0.0, 0.0, -1.0, -1.0, 1.0],
])


class FitError(Exception):
    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = dict(details)


@dataclass
class EnergySystem:
    """Assembled quadratic energy for one parameterized mesh.

    `smoothing` and the diagonal `fitting_diag` live on the full DOF space
    (3 rows per vertex plus one per edge); `keep` masks out the gradient
    rows of cone vertices, which are pinned to zero by elimination.
    """

    param: SeamedParameterization
    smoothing: sparse.csr_matrix
    fitting_diag: np.ndarray
    weight: float
    keep: np.ndarray
    factor: object | None = None
    regularized: bool = False

    @property
    def size(self) -> int:
        return self.smoothing.shape[0]


def face_uv_areas(param: SeamedParameterization) -> np.ndarray:
    uv = param.corner_uv
    e1 = uv[:, 1] - uv[:, 0]
    e2 = uv[:, 2] - uv[:, 0]
    return (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) / 2.0


def face_dof_columns(param: SeamedParameterization) -> np.ndarray:
    """(f, 12) global DOF rows feeding each face, in gather order."""
    mesh = param.mesh
    n3 = 3 * len(mesh.vertices)
    vr = (3 * mesh.faces[:, :, None] + np.arange(3)).reshape(-1, 9)
    er = n3 + mesh.edge_of_halfedge.reshape(-1, 3)
    return np.concatenate([vr, er], axis=1)


def reference_smoothing_form() -> np.ndarray:
    """Constant 12x12 quadratic form: one face's smoothing energy in its
    local DOFs.  Second derivatives of a quadratic are constant, so each
    sub-patch contributes its reference area (1/2) times the squared
    Hessian entries, weighted (1, 1, 2)."""
    DC = np.einsum("ab,lbc->lac", HESSIAN_FROM_CONTROL, CONTROL_TABLES)
    wvec = np.array([1.0, 1.0, 2.0])
    return 0.5 * np.einsum("a,lax,lay->xy", wvec, DC, DC)


def assemble(param: SeamedParameterization, weight: float = 1.0,
             ) -> EnergySystem:
    """Build the smoothing and fitting matrices for a parameterization.

    The per-face smoothing form is one constant matrix in local DOFs
    (reference-frame integration); all geometry enters through the local
    DOF gather maps.  Fitting weights are vertex areas in the same
    reference measure (a sixth of the incident face count), so both terms
    ignore the layout's arbitrary global scale.
    """
    mesh = param.mesh
    charts = param.charts
    G = local_dof_matrices(param, charts)
    cols = face_dof_columns(param)
    n = len(mesh.vertices)
    size = 3 * n + len(mesh.edges)

    uv = param.corner_uv
    span = np.stack([uv[:, 1] - uv[:, 0], uv[:, 2] - uv[:, 0]], axis=2)
    span_det = span[:, 0, 0] * span[:, 1, 1] - span[:, 0, 1] * span[:, 1, 0]
    if span_det.min() <= 0:
        raise FitError("layout contains non-positive faces",
                       worst=float(span_det.min()))

    M = reference_smoothing_form()
    K = np.einsum("fxa,xy,fyb->fab", G, M, G)

    rows = np.broadcast_to(cols[:, :, None], K.shape)
    cls = np.broadcast_to(cols[:, None, :], K.shape)
    hs = sparse.coo_matrix((K.ravel(), (rows.ravel(), cls.ravel())),
                           shape=(size, size)).tocsr()
    hs = (hs + hs.T) / 2.0

    # vertex areas in the same reference measure as the smoothing term:
    # every incident face counts 1/2, a third of which goes to the vertex
    vertex_area = np.zeros(n)
    np.add.at(vertex_area, mesh.faces.ravel(), 1.0 / 6.0)
    fit_diag = np.zeros(size)
    fit_diag[0:3 * n:3] = vertex_area

    keep = np.ones(size, dtype=bool)
    if charts is not None:
        cone = np.flatnonzero(charts.cone_vertex)
        keep[3 * cone + 1] = False
        keep[3 * cone + 2] = False

    logger.info("energy assembled: %d DOFs, %d faces, %d pinned",
                size, len(mesh.faces), int((~keep).sum()))
    return EnergySystem(param=param, smoothing=hs, fitting_diag=fit_diag,
                        weight=weight, keep=keep)


def precompute(system: EnergySystem) -> EnergySystem:
    """Factorize H = H^s + w H^f on the retained DOFs, in place."""
    h = (system.smoothing
         + sparse.diags(system.weight * system.fitting_diag))
    keep = system.keep
    reduced = h[keep][:, keep].tocsc()

    def factor_ok(mat):
        try:
            factor = splu(mat)
        except RuntimeError:
            return None
        # SuperLU does not always report near-singular pivots; probe it
        probe = np.cos(np.arange(mat.shape[0]))
        x = factor.solve(probe)
        if not np.isfinite(x).all() or \
                np.linalg.norm(mat @ x - probe) > 1e-6 * np.linalg.norm(probe):
            return None
        return factor

    factor = factor_ok(reduced)
    if factor is not None:
        system.factor, system.regularized = factor, False
        return system
    shift = 1e-12 * reduced.diagonal().sum() / reduced.shape[0]
    logger.warning("factorization failed; retrying with shift %.3e", shift)
    factor = factor_ok(reduced + shift * sparse.identity(reduced.shape[0],
                                                         format="csc"))
    if factor is None:
        raise FitError("energy matrix is singular", weight=system.weight)
    system.factor, system.regularized = factor, True
    return system


def with_weight(system: EnergySystem, weight: float) -> EnergySystem:
    """Same assembled matrices under a different fitting weight
    (factorization cleared; run precompute again)."""
    return replace(system, weight=weight, factor=None, regularized=False)


def solve_view(system: EnergySystem, positions: np.ndarray) -> np.ndarray:
    """Minimize the energy for one view's vertex positions.

    `positions` are the (transformed) targets for the position DOFs, one
    row per mesh vertex; the remaining template entries are zero.  Returns
    the full DOF array (3n + m, 3) with cone gradients exactly zero.
    """
    if system.factor is None:
        raise FitError("factorization missing; run precompute first")
    n = len(system.param.mesh.vertices)
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape != (n, 3):
        raise FitError("positions shape mismatch",
                       expected=(n, 3), got=positions.shape)
    rhs = np.zeros((system.size, 3))
    rhs[0:3 * n:3] = (system.weight
                      * system.fitting_diag[0:3 * n:3, None] * positions)
    x = system.factor.solve(rhs[system.keep])
    q = np.zeros((system.size, 3))
    q[system.keep] = x
    return q


def smoothing_energy(system: EnergySystem, q: np.ndarray) -> float:
    return float(np.einsum("nc,nc->", q, system.smoothing @ q))


def total_energy(system: EnergySystem, q: np.ndarray,
                 positions: np.ndarray) -> float:
    n = len(system.param.mesh.vertices)
    dev = q[0:3 * n:3] - positions
    fit = float((system.fitting_diag[0:3 * n:3] * (dev * dev).sum(axis=1))
                .sum())
    return smoothing_energy(system, q) + system.weight * fit


# -- precompute cache -------------------------------------------------------


def mesh_digest(vertices: np.ndarray, faces: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(vertices, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(faces, dtype=np.int64).tobytes())
    return h.hexdigest()


def save_energy_system(system: EnergySystem, path: str,
                       source_digest: str | None = None):
    """Persist the assembled system plus its parameterization.

    The sparse factorization object itself cannot be serialized, so the
    cache stores the matrices and the loader factorizes again; that is the
    cheap part compared to parameterization and assembly.
    """
    hs = system.smoothing.tocsr()
    digest = source_digest or mesh_digest(system.param.mesh.vertices,
                                          system.param.mesh.faces)
    np.savez_compressed(
        path,
        format="quadcontour-energy",
        version=1,
        mesh_digest=digest,
        weight=system.weight,
        hs_data=hs.data, hs_indices=hs.indices, hs_indptr=hs.indptr,
        fit_diag=system.fitting_diag,
        keep=system.keep,
        param_json=json.dumps(parameterization_payload(system.param)),
    )


def load_energy_system(path: str,
                       expected_digest: str | None = None) -> EnergySystem:
    with np.load(path, allow_pickle=False) as data:
        if str(data["format"]) != "quadcontour-energy" \
                or int(data["version"]) != 1:
            raise FitError("unrecognized energy cache", path=path)
        digest = str(data["mesh_digest"])
        if expected_digest is not None and digest != expected_digest:
            raise FitError("cache was built from a different mesh",
                           cached=digest, expected=expected_digest)
        param = parameterization_from_payload(
            json.loads(str(data["param_json"])))
        size = len(data["fit_diag"])
        hs = sparse.csr_matrix(
            (data["hs_data"], data["hs_indices"], data["hs_indptr"]),
            shape=(size, size))
        return EnergySystem(param=param, smoothing=hs,
                            fitting_diag=np.array(data["fit_diag"]),
                            weight=float(data["weight"]),
                            keep=np.array(data["keep"]))
