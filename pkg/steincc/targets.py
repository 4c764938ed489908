"""
Target densities, sampling distributions and complete-conditional samplers

A Target is known through its unnormalized log-density and its score
(gradient of the log-density with respect to the input). A Distribution can
be sampled. Conditional samplers draw coordinate j (or a block of coordinates)
given the remaining coordinates of each data row.

All randomness comes from a caller-owned numpy Generator.
"""

from abc import ABC, abstractmethod
from typing import Sequence, Tuple
import logging

import numpy as np
from scipy.special import expit, logsumexp

from .errors import ConfigurationError, EstimationError

logger = logging.getLogger(__name__)

LAPLACE_UNIT_VARIANCE_SCALE = 1.0 / np.sqrt(2.0)


def _as_points(x, dim: int) -> np.ndarray:
    """Validate an array of points whose last axis is the coordinate axis"""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (dim,):
        raise ValueError(f"Expected points of dimension {dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("Points contain non-finite values")
    return x


class Target(ABC):
    """A density known up to normalization"""

    @property
    @abstractmethod
    def dim(self) -> int:
        pass

    @abstractmethod
    def log_density(self, x) -> np.ndarray:
        """
        Unnormalized log-density

        Args:
            x: Points of shape (..., d)

        Returns:
            Array of shape (...)
        """
        pass

    @abstractmethod
    def score(self, x) -> np.ndarray:
        """
        Gradient of the log-density

        Args:
            x: Points of shape (..., d)

        Returns:
            Array of shape (..., d)
        """
        pass

    def score_coord(self, j: int, x) -> np.ndarray:
        """Coordinate j of the score, shape (...)"""
        return self.score(x)[..., j]

    def conditional_score(self, j: int, x, values) -> np.ndarray:
        """
        Coordinate j of the score with x_j replaced by each of `values`

        The complete-conditional score of coordinate j equals the joint score's
        coordinate j, so this is the score of p(. | x_{-j}) at `values`.

        Args:
            j: Coordinate index
            x: Context rows, shape (n, d)
            values: Replacement values for coordinate j, shape (n, m)

        Returns:
            Array of shape (n, m)
        """
        x = np.asarray(x, dtype=float)
        values = np.asarray(values, dtype=float)
        points = np.repeat(x[:, None, :], values.shape[1], axis=1)
        points[:, :, j] = values
        return self.score_coord(j, points)

    def block_conditional_score(self, block: Sequence[int], x, values) -> np.ndarray:
        """
        Score coordinates in `block` with the block of x replaced by `values`

        Args:
            block: Coordinate indices
            x: Context rows, shape (n, d)
            values: Replacement blocks, shape (n, m, len(block))

        Returns:
            Array of shape (n, m, len(block))
        """
        block = list(block)
        x = np.asarray(x, dtype=float)
        values = np.asarray(values, dtype=float)
        points = np.repeat(x[:, None, :], values.shape[1], axis=1)
        points[:, :, block] = values
        return self.score(points)[..., block]


class Distribution(ABC):
    """A distribution that can be sampled"""

    @property
    @abstractmethod
    def dim(self) -> int:
        pass

    @abstractmethod
    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """
        Draw n i.i.d. rows

        Args:
            n: Number of rows (>= 1)
            rng: Random generator

        Returns:
            Array of shape (n, d)
        """
        pass


def equicorrelated_covariance(d: int, rho: float, variance: float = 1.0) -> np.ndarray:
    """
    Covariance with `variance` on the diagonal and `rho` everywhere else

    Raises:
        ConfigurationError: If the matrix would not be positive definite
    """
    if d < 1:
        raise ConfigurationError(f"Dimension must be positive, got {d}")
    if not variance > 0:
        raise ConfigurationError(f"Variance must be positive, got {variance}")
    lower = -variance / (d - 1) if d > 1 else -np.inf
    if not lower < rho < variance:
        raise ConfigurationError(f"rho={rho} gives a singular or indefinite covariance for d={d}")
    cov = np.full((d, d), float(rho))
    np.fill_diagonal(cov, float(variance))
    return cov


class CorrelatedGaussian(Target, Distribution):
    """Multivariate normal N(mean, cov) with cached precision and Cholesky factor"""

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ConfigurationError(f"Covariance shape {cov.shape} does not match mean of length {d}")
        if not np.allclose(cov, cov.T):
            raise ConfigurationError("Covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise ConfigurationError("Covariance must be strictly positive definite") from e

        self._mean = mean
        self._cov = cov
        self._chol = chol
        precision = np.linalg.inv(cov)
        self._precision = 0.5 * (precision + precision.T)

    @classmethod
    def standard(cls, d: int) -> "CorrelatedGaussian":
        """N(0, I_d)"""
        return cls(np.zeros(d), np.eye(d))

    @classmethod
    def equicorrelated(cls, d: int, rho: float, variance: float = 1.0) -> "CorrelatedGaussian":
        """N(0, Sigma) with equicorrelated Sigma"""
        return cls(np.zeros(d), equicorrelated_covariance(d, rho, variance))

    @property
    def dim(self) -> int:
        return self._mean.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self._mean

    @property
    def cov(self) -> np.ndarray:
        return self._cov

    @property
    def precision(self) -> np.ndarray:
        return self._precision

    def log_density(self, x):
        centered = _as_points(x, self.dim) - self._mean
        return -0.5 * np.einsum("...i,ij,...j->...", centered, self._precision, centered)

    def score(self, x):
        centered = _as_points(x, self.dim) - self._mean
        return -centered @ self._precision

    def score_coord(self, j, x):
        centered = _as_points(x, self.dim) - self._mean
        return -centered @ self._precision[:, j]

    def conditional_score(self, j, x, values):
        x = np.asarray(x, dtype=float)
        base = self.score_coord(j, x)
        return base[:, None] - self._precision[j, j] * (np.asarray(values, dtype=float) - x[:, j, None])

    def sample(self, n, rng):
        z = rng.standard_normal((n, self.dim))
        return self._mean + z @ self._chol.T

    def conditional_params(self, j: int, x_minus_j) -> Tuple[float, float]:
        """
        Mean and variance of x_j given the other coordinates

        Args:
            j: Coordinate index
            x_minus_j: The other d - 1 coordinates, in order

        Returns:
            Tuple (mean, variance)
        """
        if not 0 <= j < self.dim:
            raise IndexError(f"Coordinate {j} out of range for dimension {self.dim}")
        x_minus_j = np.asarray(x_minus_j, dtype=float)
        if x_minus_j.shape != (self.dim - 1,):
            raise ValueError(f"Expected {self.dim - 1} context values, got shape {x_minus_j.shape}")
        others = np.delete(np.arange(self.dim), j)
        lam_jj = self._precision[j, j]
        shift = self._precision[j, others] @ (x_minus_j - self._mean[others])
        return float(self._mean[j] - shift / lam_jj), float(1.0 / lam_jj)


def gaussian_conditional_params(g: CorrelatedGaussian, j: int, x_minus_j) -> Tuple[float, float]:
    """Mean and variance of coordinate j of a Gaussian given the others"""
    return g.conditional_params(j, x_minus_j)


class LaplaceProduct(Target, Distribution):
    """Independent Laplace(0, b) coordinates; the default b gives unit variance"""

    def __init__(self, d: int, scale=LAPLACE_UNIT_VARIANCE_SCALE):
        if d < 1:
            raise ConfigurationError(f"Dimension must be positive, got {d}")
        scale = np.broadcast_to(np.asarray(scale, dtype=float), (d,)).copy()
        if np.any(scale <= 0):
            raise ConfigurationError("Laplace scales must be positive")
        self._d = d
        self._scale = scale

    @property
    def dim(self) -> int:
        return self._d

    @property
    def scale(self) -> np.ndarray:
        return self._scale

    def log_density(self, x):
        return -np.sum(np.abs(_as_points(x, self._d)) / self._scale, axis=-1)

    # Undefined at 0; estimators never evaluate the sampling distribution's score
    def score(self, x):
        return -np.sign(_as_points(x, self._d)) / self._scale

    def sample(self, n, rng):
        return rng.laplace(0.0, self._scale, size=(n, self._d))

    def sample_marginal(self, block: Sequence[int], size: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
        """Draw coordinates `block` independently; returns shape size + (len(block),)"""
        return rng.laplace(0.0, self._scale[list(block)], size=tuple(size) + (len(block),))


def laplace_noise_gaussian_sample(d: int, n: int, rng: np.random.Generator, rho: float = 0.5) -> np.ndarray:
    """
    Rows z + e with z ~ N(0, Sigma_1) equicorrelated (unit diagonal, off-diagonal rho)
    and e ~ prod Laplace(0, 1/sqrt(2)); covariance is Sigma_1 + I

    Raises:
        ConfigurationError: If d < 2
    """
    if d < 2:
        raise ConfigurationError(f"Laplace-noise Gaussian needs d >= 2, got {d}")
    chol = np.linalg.cholesky(equicorrelated_covariance(d, rho, 1.0))
    z = rng.standard_normal((n, d)) @ chol.T
    noise = rng.laplace(0.0, LAPLACE_UNIT_VARIANCE_SCALE, size=(n, d))
    return z + noise


class LaplaceNoiseGaussian(Distribution):
    """Correlated Gaussian plus independent Laplace noise (conditionals unavailable)"""

    def __init__(self, d: int, rho: float = 0.5):
        if d < 2:
            raise ConfigurationError(f"Laplace-noise Gaussian needs d >= 2, got {d}")
        self._d = d
        self._rho = rho

    @property
    def dim(self) -> int:
        return self._d

    def matching_gaussian(self) -> CorrelatedGaussian:
        """The Gaussian with the same mean and covariance (diagonal 2, off-diagonal rho)"""
        return CorrelatedGaussian.equicorrelated(self._d, self._rho, 2.0)

    def sample(self, n, rng):
        return laplace_noise_gaussian_sample(self._d, n, rng, self._rho)


class GmmPosterior(Target):
    """
    Posterior over (theta1, theta2) for x_i ~ 0.5 N(theta1, v) + 0.5 N(theta2, v)
    with independent standard normal priors; v is a variance
    """

    def __init__(self, observations, variance: float = 2.0):
        if not variance > 0:
            raise ConfigurationError(f"Component variance must be positive, got {variance}")
        self._obs = np.asarray(observations, dtype=float).reshape(-1)
        self._variance = float(variance)

    @classmethod
    def simulate(
        cls,
        rng: np.random.Generator,
        theta: Tuple[float, float] = (1.0, -1.0),
        n_obs: int = 100,
        variance: float = 2.0,
    ) -> "GmmPosterior":
        """Draw n_obs observations from the mixture at `theta` and build the posterior"""
        components = rng.integers(0, 2, size=n_obs)
        means = np.asarray(theta, dtype=float)[components]
        observations = means + np.sqrt(variance) * rng.standard_normal(n_obs)
        return cls(observations, variance)

    @property
    def dim(self) -> int:
        return 2

    @property
    def observations(self) -> np.ndarray:
        return self._obs

    def _component_logits(self, theta: np.ndarray) -> np.ndarray:
        # shape (..., N, 2), constants dropped
        diff = self._obs[:, None] - theta[..., None, :]
        return -0.5 * diff ** 2 / self._variance

    def log_density(self, x):
        theta = _as_points(x, 2)
        log_prior = -0.5 * np.sum(theta ** 2, axis=-1)
        logits = self._component_logits(theta) + np.log(0.5)
        return log_prior + np.sum(logsumexp(logits, axis=-1), axis=-1)

    def score(self, x):
        theta = _as_points(x, 2)
        logits = self._component_logits(theta)
        first = expit(logits[..., 0] - logits[..., 1])
        resp = np.stack([first, 1.0 - first], axis=-1)
        diff = self._obs[:, None] - theta[..., None, :]
        return -theta + np.sum(resp * diff, axis=-2) / self._variance


class ConditionalSampler(ABC):
    """Source of auxiliary draws of coordinate j given the other coordinates"""

    @abstractmethod
    def sample(self, j: int, data: np.ndarray, n_y: int, rng: np.random.Generator) -> np.ndarray:
        """
        Draw n_y values of coordinate j for every row of `data`

        Args:
            j: Coordinate index
            data: Rows of shape (n, d); column j is ignored
            n_y: Draws per row
            rng: Random generator

        Returns:
            Array of shape (n, n_y)
        """
        pass


class BlockConditionalSampler(ABC):
    """Source of auxiliary draws of a coordinate block given the rest"""

    @abstractmethod
    def sample_block(self, block: Sequence[int], data: np.ndarray, n_y: int,
                     rng: np.random.Generator) -> np.ndarray:
        """
        Draw n_y values of the coordinates in `block` for every row of `data`

        Returns:
            Array of shape (n, n_y, len(block))
        """
        pass


class GaussianConditionals(ConditionalSampler, BlockConditionalSampler):
    """Exact complete conditionals of a CorrelatedGaussian"""

    def __init__(self, gaussian: CorrelatedGaussian):
        self._g = gaussian

    def conditional_means(self, j: int, data: np.ndarray) -> np.ndarray:
        """Conditional mean of coordinate j for every row"""
        precision = self._g.precision
        centered = np.asarray(data, dtype=float) - self._g.mean
        lam_jj = precision[j, j]
        shift = centered @ precision[:, j] - lam_jj * centered[:, j]
        return self._g.mean[j] - shift / lam_jj

    def sample(self, j, data, n_y, rng):
        means = self.conditional_means(j, data)
        sd = np.sqrt(1.0 / self._g.precision[j, j])
        return means[:, None] + sd * rng.standard_normal((means.shape[0], n_y))

    def sample_block(self, block, data, n_y, rng):
        block = list(block)
        data = np.asarray(data, dtype=float)
        others = [i for i in range(self._g.dim) if i not in block]
        precision = self._g.precision
        lam_bb = precision[np.ix_(block, block)]
        cond_cov = np.linalg.inv(lam_bb)
        chol = np.linalg.cholesky(0.5 * (cond_cov + cond_cov.T))

        centered = data - self._g.mean
        shift = centered[:, others] @ precision[np.ix_(block, others)].T
        means = self._g.mean[block] - shift @ cond_cov.T

        z = rng.standard_normal((data.shape[0], n_y, len(block)))
        return means[:, None, :] + z @ chol.T


class ProductConditionals(ConditionalSampler, BlockConditionalSampler):
    """Conditionals of a distribution with independent coordinates (context is ignored)"""

    def __init__(self, distribution: LaplaceProduct):
        self._dist = distribution

    def sample(self, j, data, n_y, rng):
        n = np.asarray(data).shape[0]
        return self._dist.sample_marginal([j], (n, n_y), rng)[..., 0]

    def sample_block(self, block, data, n_y, rng):
        n = np.asarray(data).shape[0]
        return self._dist.sample_marginal(block, (n, n_y), rng)


class IndependentGaussianConditionals(ConditionalSampler, BlockConditionalSampler):
    """Conditionals of N(0, I): standard normal draws regardless of context"""

    def sample(self, j, data, n_y, rng):
        return rng.standard_normal((np.asarray(data).shape[0], n_y))

    def sample_block(self, block, data, n_y, rng):
        return rng.standard_normal((np.asarray(data).shape[0], n_y, len(list(block))))


class PrecomputedConditionals(ConditionalSampler):
    """
    Replays stored auxiliary draws

    Args:
        auxiliaries: Array of shape (n, d, m) with m draws per row and coordinate
    """

    def __init__(self, auxiliaries):
        self._aux = np.asarray(auxiliaries, dtype=float)
        if self._aux.ndim != 3:
            raise ConfigurationError(f"Auxiliaries must have shape (n, d, m), got {self._aux.shape}")

    def sample(self, j, data, n_y, rng=None):
        n = np.asarray(data).shape[0]
        if n != self._aux.shape[0]:
            raise EstimationError(
                f"Coordinate {j}: {n} data rows but {self._aux.shape[0]} rows of stored auxiliaries"
            )
        if n_y > self._aux.shape[2]:
            raise EstimationError(
                f"Coordinate {j}: requested {n_y} draws per row, only {self._aux.shape[2]} stored"
            )
        return self._aux[:, j, :n_y]
