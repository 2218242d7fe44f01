"""Steklov eigenvalues of warped and conformally deformed cylinders."""
from .cross_section import CrossSection, CrossSectionComponent, parse_cross_section
from .profiles import MetricFamily, Profile, identity_profile, make_profile
from .mode_solver import ModeProblem, Resolution, dtn_matrix
from .spectrum import SpectrumRequest, SpectrumResult, steklov_dirichlet_spectrum, steklov_spectrum

__all__ = [
    "CrossSection", "CrossSectionComponent", "parse_cross_section",
    "MetricFamily", "Profile", "identity_profile", "make_profile",
    "ModeProblem", "Resolution", "dtn_matrix",
    "SpectrumRequest", "SpectrumResult", "steklov_dirichlet_spectrum", "steklov_spectrum",
]
__version__ = "0.1.0"
