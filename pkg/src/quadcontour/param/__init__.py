"""Seamless global parameterization with cone singularities.

Pipeline: pick cones, refine their neighborhoods, flatten the metric
conformally, cut to disks, lay out, and build charts.  `parameterize` runs
all stages; the JSON import/export lets a precomputed layout stand in for
the early stages.
"""

from __future__ import annotations

import json
import logging

import numpy as np

from quadcontour.mesh import Mesh
from quadcontour.param.cones import (angle_defects, cone_count_for_genus,
                                     select_cones)
from quadcontour.param.subdivide import subdivide_cone_neighborhoods
from quadcontour.param.conformal import (ConformalError, ConformalMetric,
                                         compute_conformal_metric)
from quadcontour.param.cut import (LayoutError, SeamedParameterization,
                                   cut_and_layout, validate_layout)
from quadcontour.param.charts import Charts, build_charts

__all__ = [
    "ConformalError", "ConformalMetric", "LayoutError",
    "SeamedParameterization", "Charts",
    "angle_defects", "cone_count_for_genus", "select_cones",
    "subdivide_cone_neighborhoods", "compute_conformal_metric",
    "cut_and_layout", "validate_layout", "build_charts",
    "parameterize", "save_parameterization", "load_parameterization",
    "parameterization_payload", "parameterization_from_payload",
]

logger: logging.Logger = logging.getLogger(__name__)


def parameterize(mesh: Mesh, tol: float = 1e-10,
                 max_iterations: int = 100) -> SeamedParameterization:
    """Run the full parameterization pipeline on a normalized mesh.

    Returns a SeamedParameterization over a refined copy of the input mesh
    (cone neighborhoods get one round of subdivision), with charts attached.
    """
    cones = select_cones(mesh)
    refined = subdivide_cone_neighborhoods(mesh, cones)
    metric = compute_conformal_metric(refined, cones, tol=tol,
                                      max_iterations=max_iterations)
    logger.info("conformal metric: residual %.2e after %d iterations",
                metric.residual, metric.iterations)
    param = cut_and_layout(refined, metric.lengths, cones)
    build_charts(param)
    return param


def parameterization_payload(param: SeamedParameterization) -> dict:
    """JSON-ready dict with mesh, per-corner uv, seams, and cones."""
    return {
        "format": "quadcontour-parameterization",
        "version": 1,
        "vertices": param.mesh.vertices.tolist(),
        "faces": param.mesh.faces.tolist(),
        "corner_uv": param.corner_uv.tolist(),
        "corner_copy": param.corner_copy.tolist(),
        "seam_halfedges": param.seam_halfedges.tolist(),
        "cones": param.cones.tolist(),
    }


def save_parameterization(param: SeamedParameterization, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(parameterization_payload(param), fh)


def parameterization_from_payload(payload: dict) -> SeamedParameterization:
    """Rebuild a layout from its payload dict; validates invariants and
    builds charts so later stages cannot tell the difference."""
    if payload.get("format") != "quadcontour-parameterization":
        raise LayoutError("unrecognized parameterization payload")
    mesh = Mesh(np.array(payload["vertices"], dtype=np.float64),
                np.array(payload["faces"], dtype=np.int64))
    corner_copy = np.array(payload["corner_copy"], dtype=np.int64)
    n_copies = int(corner_copy.max()) + 1
    copy_vertex = np.full(n_copies, -1, dtype=np.int64)
    copy_vertex[corner_copy] = mesh.faces
    seams = np.array(payload["seam_halfedges"],
                     dtype=np.int64).reshape(-1, 2)
    cut_edges = np.array(sorted(int(mesh.edge_of_halfedge[h])
                                for h in seams[:, 0]), dtype=np.int64)
    param = SeamedParameterization(
        mesh=mesh,
        corner_uv=np.array(payload["corner_uv"], dtype=np.float64),
        corner_copy=corner_copy,
        copy_vertex=copy_vertex,
        seam_halfedges=seams,
        cut_edges=cut_edges,
        cones=np.array(payload["cones"], dtype=np.int64),
    )
    param.diagnostics = validate_layout(param)
    build_charts(param)
    return param


def load_parameterization(path: str) -> SeamedParameterization:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "quadcontour-parameterization":
        raise LayoutError("unrecognized parameterization file", path=path)
    return parameterization_from_payload(payload)
