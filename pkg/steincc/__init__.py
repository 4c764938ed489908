"""
steincc - kernelized complete-conditional Stein discrepancies and goodness-of-fit tests
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, DegenerateSampleError, EstimationError, SteinccError
from .kernels import IMQKernel, RBFKernel, get_kernel, median_heuristic
from .stein import estimate_block_kccsd, estimate_kccsd, estimate_ksd
from .cond_model import estimate_approx_kccsd, fit_conditionals
from .gof import TestScenario, estimate_power, gof_test, ksd_gof_test

__all__ = [
    "SteinccError",
    "ConfigurationError",
    "DegenerateSampleError",
    "EstimationError",
    "RBFKernel",
    "IMQKernel",
    "get_kernel",
    "median_heuristic",
    "estimate_kccsd",
    "estimate_block_kccsd",
    "estimate_ksd",
    "estimate_approx_kccsd",
    "fit_conditionals",
    "TestScenario",
    "estimate_power",
    "gof_test",
    "ksd_gof_test",
]
