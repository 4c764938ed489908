"""
Exception types for steincc
"""


class SteinccError(Exception):
    """Base class for all steincc errors"""


class ConfigurationError(SteinccError, ValueError):
    """Invalid parameters, partitions, data splits or experiment specs"""


class DegenerateSampleError(SteinccError, ValueError):
    """Sample has no spread (e.g. all pairwise distances are zero)"""


class EstimationError(SteinccError, RuntimeError):
    """
    Numerical failure while estimating a discrepancy

    Raised for non-finite scores or Stein-kernel values, diverging conditional
    model training and failing conditional samplers. The message always names
    the coordinate (and row, when known) where the failure was detected.
    """
