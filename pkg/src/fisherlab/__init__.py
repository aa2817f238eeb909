"""Lower bounds for the constant Lambda_b that governs monotonicity of the
Fisher information along the space-homogeneous Boltzmann flow, for
inverse power-law and related collision kernels."""

from .compare import certify_kernel, certify_power_law, ratio_scan, reproduce_table
from .constants import (cK_curvature, cP_general, lambda_local, lambda_subordinate,
                        monotonicity_verdict)
from .kernels import (ConcentratedKernel, PowerLawPotential, constant_kernel,
                      deviation_angle, hard_sphere_kernel, power_law_kernel, rutherford_kernel)
from .numerics import DomainError, NonConvergenceError
from .spectral import HeatKernel, SpectralData, WeightFunction, subordinate_kernel

__version__ = "0.1.0"

__all__ = [
    "ConcentratedKernel", "DomainError", "HeatKernel", "NonConvergenceError",
    "PowerLawPotential", "SpectralData", "WeightFunction", "__version__", "cK_curvature",
    "cP_general", "certify_kernel", "certify_power_law", "constant_kernel", "deviation_angle",
    "hard_sphere_kernel", "lambda_local", "lambda_subordinate", "monotonicity_verdict",
    "power_law_kernel", "ratio_scan", "reproduce_table", "rutherford_kernel",
    "subordinate_kernel",
]
