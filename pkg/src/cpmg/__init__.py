"""Closest point method for elliptic surface PDEs with a closest-point multigrid solver."""

from .band import BandedGrid, bandwidth, build_band
from .errors import CpmError
from .geometry import Circle, DziukSurface, SplineCurve, Sphere, Torus, make_surface
from .linalg import direct_solve
from .multigrid import MgParams, build_hierarchy, solve, v_cycle
from .operators import SystemParams, assemble_operators, assemble_system, build_extension, build_laplacian
from .problems import make_problem, surface_error

__version__ = "0.1.0"
