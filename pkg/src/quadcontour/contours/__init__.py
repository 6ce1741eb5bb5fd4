"""Closed-form occluding contours of quadratic patches.

Per patch, the dot product of the view vector with the (quadratic) patch
normal is a quadratic in the domain coordinates, so its zero set is a
conic section.  The submodules classify that conic, parameterize it with
rational-quadratic curves, trim them to the domain triangle, and lift
them through the patch map to rational-quartic curves in view space.
"""

from quadcontour.contours.conics import (
    ConicContourEq,
    classify_and_parameterize,
    conic_value,
)
from quadcontour.contours.extract import (
    ContourError,
    ContourSegment,
    ParamCurve,
    contour_coefficients,
    emitting_patches,
    extract_contours,
    lift,
    trim_to_triangle,
)

__all__ = [
    "ConicContourEq",
    "ContourError",
    "ContourSegment",
    "ParamCurve",
    "classify_and_parameterize",
    "conic_value",
    "contour_coefficients",
    "emitting_patches",
    "extract_contours",
    "lift",
    "trim_to_triangle",
]
