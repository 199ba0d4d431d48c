"""Frequency-domain EMI forward modelling and 1D conductivity inversion.

Layered-earth forward model with an analytic Jacobian, damped Gauss-Newton
inversion regularized by truncated GSVD (identity, difference operators or
minimum gradient support), depth of investigation, synthetic surveys and an
``emi`` command-line tool.
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.1.0"

from .doi import DEFAULT_ETA, doi_depth, integrated_sensitivity
from .errors import (ArgumentError, DomainError, EmiError, InversionFailure, LayoutError,
                     NumericalRankError, SingularComponentError, UndefinedSensitivityError)
from .forward import (apparent_conductivity, forward_and_jacobian, forward_response,
                      jacobian, reflection_factor, surface_admittance)
from .hankel import hankel_integrate
from .inversion import (InversionConfig, InversionResult, invert_section, invert_sounding,
                        lcurve_corner, select_ell_discrepancy, select_ell_lcurve)
from .model import DeviceConfig, LayeredEarthModel, cmd_explorer, stack, unstack
from .regularization import gsvd, mgs_functional, mgs_weights, reg_matrix, tgsvd_solve
from .synthdata import add_noise, discretize_profile, make_pseudo2d_model, snr_db

__all__ = [
    "ArgumentError", "DEFAULT_ETA", "DeviceConfig", "DomainError", "EmiError",
    "InversionConfig", "InversionFailure", "InversionResult", "LayeredEarthModel",
    "LayoutError", "NumericalRankError", "SingularComponentError",
    "UndefinedSensitivityError", "add_noise", "apparent_conductivity", "cmd_explorer",
    "discretize_profile", "doi_depth", "forward_and_jacobian", "forward_response",
    "gsvd", "hankel_integrate", "integrated_sensitivity", "invert_section",
    "invert_sounding", "jacobian", "lcurve_corner", "make_pseudo2d_model",
    "mgs_functional", "mgs_weights", "reflection_factor", "reg_matrix",
    "select_ell_discrepancy", "select_ell_lcurve", "snr_db", "stack",
    "surface_admittance", "tgsvd_solve", "unstack",
]
