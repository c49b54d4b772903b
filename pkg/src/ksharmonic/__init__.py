"""Discrete Korevaar-Schoen energies and harmonic maps into regular balls of the sphere."""

from .domain import PointCloudSpace, build_coordinate_domain, build_graph_domain, build_grid_domain
from .energy import MapState, dirichlet_energy, ks_values, modified_energy, total_energy
from .solver import SolverConfig, geodesic_init, multistart_uniqueness, solve
from .targets import Euclidean, RegularBall, Sphere, corrected_midpoint, eta_solve

__version__ = "0.1.0"

__all__ = [
    "PointCloudSpace", "build_grid_domain", "build_graph_domain", "build_coordinate_domain",
    "MapState", "ks_values", "total_energy", "dirichlet_energy", "modified_energy",
    "SolverConfig", "solve", "geodesic_init", "multistart_uniqueness",
    "Sphere", "Euclidean", "RegularBall", "eta_solve", "corrected_midpoint",
]
