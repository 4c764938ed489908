"""
Positive-definite radial kernels with analytic derivatives

Every kernel here is radial, k(x, y) = phi(r2) with r2 = ||x - y||^2, so all
partial derivatives follow from phi and its first two derivatives:

    d/dx_j k        =  2 (x_j - y_j) phi'(r2)
    d/dy_j k        = -2 (x_j - y_j) phi'(r2)
    d2/dx_j dy_j k  = -2 phi'(r2) - 4 (x_j - y_j)^2 phi''(r2)

A kernel built with dim=None is univariate and works elementwise on arrays of
reals. A kernel built with dim=d is multivariate and treats the last array
axis as the coordinate axis.
"""

from abc import ABC, abstractmethod
from typing import Optional, Tuple
import logging

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ConfigurationError, DegenerateSampleError

logger = logging.getLogger(__name__)


class Kernel(ABC):
    """Abstract base class for radial kernels"""

    name = "kernel"

    def __init__(self, dim: Optional[int] = None):
        if dim is not None and dim < 1:
            raise ConfigurationError(f"Kernel dimension must be positive, got {dim}")
        self._dim = dim

    @property
    def dim(self) -> Optional[int]:
        """Input dimension, or None for a univariate kernel"""
        return self._dim

    @property
    def is_univariate(self) -> bool:
        return self._dim is None

    @abstractmethod
    def radial_terms(self, r2: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Evaluate the radial profile and its derivatives

        Args:
            r2: Squared distances

        Returns:
            Tuple (phi, phi', phi'') evaluated at r2
        """
        pass

    @abstractmethod
    def with_dim(self, dim: Optional[int]) -> "Kernel":
        """Return the same kernel family and parameters with another input dimension"""
        pass

    def _diff(self, x, y) -> np.ndarray:
        diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        if self._dim is not None and diff.shape[-1:] != (self._dim,):
            raise ValueError(f"Expected points of dimension {self._dim}, got shape {diff.shape}")
        return diff

    def _require_univariate(self) -> None:
        if self._dim is not None:
            raise ValueError("Use the *_coord methods for a multivariate kernel")

    def _require_multivariate(self, j: int) -> None:
        if self._dim is None:
            raise ValueError("Coordinate derivatives need a multivariate kernel (dim is None)")
        if not 0 <= j < self._dim:
            raise IndexError(f"Coordinate {j} out of range for dimension {self._dim}")

    def eval(self, x, y) -> np.ndarray:
        """Kernel value k(x, y)"""
        diff = self._diff(x, y)
        r2 = diff ** 2 if self._dim is None else np.sum(diff ** 2, axis=-1)
        phi, _, _ = self.radial_terms(r2)
        return phi

    def grad_x(self, x, y) -> np.ndarray:
        """Partial derivative of a univariate kernel in its first argument"""
        self._require_univariate()
        diff = self._diff(x, y)
        _, dphi, _ = self.radial_terms(diff ** 2)
        return 2.0 * diff * dphi

    def grad_y(self, x, y) -> np.ndarray:
        """Partial derivative of a univariate kernel in its second argument"""
        return -self.grad_x(x, y)

    def grad_xy(self, x, y) -> np.ndarray:
        """Mixed second partial derivative of a univariate kernel"""
        self._require_univariate()
        diff = self._diff(x, y)
        r2 = diff ** 2
        _, dphi, ddphi = self.radial_terms(r2)
        return -2.0 * dphi - 4.0 * r2 * ddphi

    def grad_x_coord(self, j: int, x, y) -> np.ndarray:
        """Partial derivative in coordinate j of the first argument"""
        self._require_multivariate(j)
        diff = self._diff(x, y)
        _, dphi, _ = self.radial_terms(np.sum(diff ** 2, axis=-1))
        return 2.0 * diff[..., j] * dphi

    def grad_y_coord(self, j: int, x, y) -> np.ndarray:
        """Partial derivative in coordinate j of the second argument"""
        return -self.grad_x_coord(j, x, y)

    def grad_xy_coord(self, j: int, x, y) -> np.ndarray:
        """Mixed second partial derivative in coordinate j of both arguments"""
        self._require_multivariate(j)
        diff = self._diff(x, y)
        _, dphi, ddphi = self.radial_terms(np.sum(diff ** 2, axis=-1))
        return -2.0 * dphi - 4.0 * diff[..., j] ** 2 * ddphi

    def gram(self, X, Y=None) -> np.ndarray:
        """
        Kernel matrix between two point sets

        Args:
            X: Points, shape (n,) for a univariate kernel or (n, d)
            Y: Points, shape (m,) or (m, d); defaults to X

        Returns:
            Matrix of shape (n, m)
        """
        X = np.asarray(X, dtype=float)
        Y = X if Y is None else np.asarray(Y, dtype=float)
        if self._dim is None:
            return self.eval(X[:, None], Y[None, :])
        return self.eval(X[:, None, :], Y[None, :, :])


class RBFKernel(Kernel):
    """Gaussian kernel exp(-||x - y||^2 / (2 sigma^2))"""

    name = "rbf"

    def __init__(self, sigma: float = 1.0, dim: Optional[int] = None):
        super().__init__(dim)
        if not np.isfinite(sigma) or sigma <= 0:
            raise ConfigurationError(f"RBF bandwidth must be positive, got {sigma}")
        self._sigma = float(sigma)
        self._inv_two_s2 = 1.0 / (2.0 * self._sigma ** 2)

    @property
    def sigma(self) -> float:
        return self._sigma

    def radial_terms(self, r2):
        phi = np.exp(-np.asarray(r2) * self._inv_two_s2)
        dphi = -self._inv_two_s2 * phi
        ddphi = self._inv_two_s2 ** 2 * phi
        return phi, dphi, ddphi

    def with_dim(self, dim):
        return RBFKernel(self._sigma, dim)

    def __repr__(self) -> str:
        return f"RBFKernel(sigma={self._sigma}, dim={self._dim})"


class IMQKernel(Kernel):
    """Inverse multiquadric kernel (c^2 + ||x - y||^2)^(-beta), beta in (0, 1)"""

    name = "imq"

    def __init__(self, c: float = 1.0, beta: float = 0.5, dim: Optional[int] = None):
        super().__init__(dim)
        if not np.isfinite(c) or c <= 0:
            raise ConfigurationError(f"IMQ offset c must be positive, got {c}")
        if not 0 < beta < 1:
            raise ConfigurationError(f"IMQ exponent beta must lie in (0, 1), got {beta}")
        self._c = float(c)
        self._beta = float(beta)

    @property
    def c(self) -> float:
        return self._c

    @property
    def beta(self) -> float:
        return self._beta

    def radial_terms(self, r2):
        base = self._c ** 2 + np.asarray(r2)
        phi = base ** -self._beta
        dphi = -self._beta * phi / base
        ddphi = self._beta * (self._beta + 1.0) * phi / base ** 2
        return phi, dphi, ddphi

    def with_dim(self, dim):
        return IMQKernel(self._c, self._beta, dim)

    def __repr__(self) -> str:
        return f"IMQKernel(c={self._c}, beta={self._beta}, dim={self._dim})"


def median_heuristic(samples) -> float:
    """
    Median of all pairwise Euclidean distances

    An even number of pairs averages the two middle order statistics.

    Args:
        samples: Array of shape (n,) or (n, d) with n >= 2

    Returns:
        Positive bandwidth

    Raises:
        ConfigurationError: If fewer than two points are given
        DegenerateSampleError: If the median distance is zero
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 2:
        raise ConfigurationError(f"Median heuristic needs at least two points, got shape {X.shape}")

    distances = pdist(X, metric="euclidean")
    sigma = float(np.median(distances))
    if sigma <= 0:
        raise DegenerateSampleError("degenerate sample: median pairwise distance is zero")
    return sigma


def get_kernel(
    name: str,
    bandwidth: Optional[float] = None,
    c: float = 1.0,
    beta: float = 0.5,
    dim: Optional[int] = None,
) -> Kernel:
    """
    Get a kernel instance by family name

    Args:
        name: Kernel family ('rbf' or 'imq')
        bandwidth: RBF sigma (defaults to 1); ignored for IMQ
        c: IMQ offset
        beta: IMQ exponent magnitude
        dim: None for a univariate kernel, else the input dimension

    Returns:
        Kernel instance

    Raises:
        ConfigurationError: If the family is unknown or parameters are invalid
    """
    name = name.lower()
    if name == "rbf":
        return RBFKernel(1.0 if bandwidth is None else bandwidth, dim)
    elif name == "imq":
        return IMQKernel(c, beta, dim)
    else:
        raise ConfigurationError(f"Unknown kernel: {name}")
