"""Occluding contours of piecewise-quadratic surface approximations.

The package fits a C1 piecewise-quadratic surface to a triangle mesh in a
view-dependent way and extracts its occluding contours in closed form as
piecewise-rational image-space curves, each labeled with a quantitative
invisibility count.
"""

from quadcontour.mesh import Mesh, MeshError, load_obj, save_obj

__all__ = ["Mesh", "MeshError", "load_obj", "save_obj"]

__version__ = "0.1.0"
