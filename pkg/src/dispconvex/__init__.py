"""Numerical toolkit for displacement convexity of coupled-code potentials."""

__version__ = "0.1.0"

from .ensemble import Ensemble, ThresholdResult, map_threshold, single_potential, single_potential_deriv
from .profile import Grid, Profile, ProfileClass, classify, pin, read_profile_csv, write_profile_csv
from .potential import CoupledSystem, PotentialBreakdown, continuum_potential, de_residual, discrete_potential
from .transport import ConvexityReport, InterpolationPath, convexity_probe, displacement_interpolate
from .desolve import SolveConfig, SolveResult, continuum_de_solve, discrete_de_solve
from .kernel import KernelPoint, kernel_exact, kernel_hessian, kernel_quadrature

__all__ = [
    "ConvexityReport", "CoupledSystem", "Ensemble", "Grid", "InterpolationPath", "KernelPoint",
    "PotentialBreakdown", "Profile", "ProfileClass", "SolveConfig", "SolveResult", "ThresholdResult",
    "classify", "continuum_de_solve", "continuum_potential", "convexity_probe", "de_residual",
    "discrete_de_solve", "discrete_potential", "displacement_interpolate", "kernel_exact",
    "kernel_hessian", "kernel_quadrature", "map_threshold", "pin", "read_profile_csv",
    "single_potential", "single_potential_deriv", "write_profile_csv",
]
