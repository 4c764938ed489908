"""
Stein kernels and discrepancy estimators

Conditional (KCC-SD) estimators pair every observed row with fresh auxiliary
draws of one coordinate given the rest. The KSD baseline is a V-statistic over
all ordered row pairs.
"""

from typing import List, Sequence, Tuple, Union
import logging

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, EstimationError, SteinccError
from .kernels import Kernel
from .models import DiscrepancyEstimate
from .targets import BlockConditionalSampler, ConditionalSampler, Target
from .workers import run_parallel

logger = logging.getLogger(__name__)

KernelSpec = Union[Kernel, Sequence[Kernel]]


def _check_coordinate(j: int, d: int) -> None:
    if not 0 <= j < d:
        raise IndexError(f"Coordinate {j} out of range for dimension {d}")


def _check_finite(values: np.ndarray, what: str, coordinate) -> None:
    """Raise EstimationError naming the coordinate and first offending row"""
    finite = np.isfinite(values)
    if np.all(finite):
        return
    bad = np.argwhere(~finite)[0]
    row = int(bad[0]) if bad.size else 0
    message = f"Non-finite {what} for coordinate {coordinate} at row {row}"
    logger.error(message)
    raise EstimationError(message)


def _rows(data) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ConfigurationError(f"Data must be a non-empty (n, d) matrix, got shape {data.shape}")
    return data


def _coordinate_kernels(kernel: KernelSpec, d: int) -> List[Kernel]:
    """Expand one univariate kernel (or a per-coordinate list) to d kernels"""
    kernels = [kernel] * d if isinstance(kernel, Kernel) else list(kernel)
    if len(kernels) != d:
        raise ConfigurationError(f"Expected {d} per-coordinate kernels, got {len(kernels)}")
    for k in kernels:
        if not k.is_univariate:
            raise ConfigurationError(f"Conditional Stein kernels need univariate kernels, got {k!r}")
    return kernels


def _kernel_for_dim(kernel: Kernel, dim: int) -> Kernel:
    return kernel if kernel.dim == dim else kernel.with_dim(dim)


def cc_stein_kernel(j: int, x, y_j, target: Target, kernel: Kernel):
    """
    Conditional Stein kernel of coordinate j

    Evaluates k_cc^j(x_j, y_j; x_{-j}) = b(x) b(y) k + b(x) dk/dy + b(y) dk/dx + d2k/dxdy,
    where b(u) is coordinate j of the target score with x_j replaced by u.

    Args:
        j: Coordinate index
        x: A row of shape (d,) or rows of shape (n, d)
        y_j: Values for coordinate j: a scalar or (m,) for a single row,
            (n,) or (n, m) for n rows
        target: Target whose score is used
        kernel: Univariate kernel

    Returns:
        Values with the shape of y_j (a float for scalar inputs)

    Raises:
        EstimationError: If a kernel value is not finite
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y_j, dtype=float)
    rows = np.atleast_2d(x)
    n, d = rows.shape
    _check_coordinate(j, d)
    values = y.reshape(n, -1)

    xj = rows[:, j, None]
    b_x = target.score_coord(j, rows)[:, None]
    b_y = target.conditional_score(j, rows, values)

    out = (
        b_x * b_y * kernel.eval(xj, values)
        + b_x * kernel.grad_y(xj, values)
        + b_y * kernel.grad_x(xj, values)
        + kernel.grad_xy(xj, values)
    )
    _check_finite(out, "conditional Stein kernel", j)

    result = out.reshape(y.shape)
    return float(result) if result.ndim == 0 else result


def ksd_stein_kernel_coord(j: int, x, y, target: Target, kernel: Kernel):
    """
    Coordinate j of the KSD Stein kernel k_0^j(x, y)

    Args:
        j: Coordinate index
        x: Points of shape (..., d)
        y: Points of shape (..., d), broadcastable against x
        target: Target whose score is used
        kernel: Kernel on R^d (a univariate kernel is lifted to dimension d)

    Returns:
        Values of the broadcast shape (a float for single points)
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = target.dim
    _check_coordinate(j, d)
    kernel = _kernel_for_dim(kernel, d)

    b_x = target.score_coord(j, x)
    b_y = target.score_coord(j, y)
    out = (
        b_x * b_y * kernel.eval(x, y)
        + b_x * kernel.grad_y_coord(j, x, y)
        + b_y * kernel.grad_x_coord(j, x, y)
        + kernel.grad_xy_coord(j, x, y)
    )
    _check_finite(np.atleast_1d(out), "KSD Stein kernel", j)
    return float(out) if np.ndim(out) == 0 else out


def block_stein_kernel(block: Sequence[int], x, y_block, target: Target, kernel: Kernel):
    """
    Block conditional Stein kernel

    Sums, over l in the block, b_l(x) b_l(y) k + b_l(x) dk/dy_l + b_l(y) dk/dx_l + d2k/dx_l dy_l,
    where the kernel acts on the block coordinates only and y is x with the
    block replaced by y_block.

    Args:
        block: Distinct coordinate indices
        x: A row of shape (d,) or rows of shape (n, d)
        y_block: Shape (|I|,) for a single row, or (n, m, |I|)
        target: Target whose score is used
        kernel: Kernel on R^|I| (a univariate kernel is lifted)

    Returns:
        A float for a single row and block value, otherwise shape (n, m)
    """
    block = list(block)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y_block, dtype=float)
    rows = np.atleast_2d(x)
    n, d = rows.shape
    if not block or len(set(block)) != len(block):
        raise ConfigurationError(f"Block must be non-empty with distinct indices, got {block}")
    for j in block:
        _check_coordinate(j, d)
    kernel = _kernel_for_dim(kernel, len(block))
    values = y.reshape(n, -1, len(block))

    x_block = rows[:, None, block]
    b_x = target.score(rows)[:, None, block]
    b_y = target.block_conditional_score(block, rows, values)
    k = kernel.eval(x_block, values)

    out = np.zeros(values.shape[:2])
    for idx in range(len(block)):
        out += (
            b_x[..., idx] * b_y[..., idx] * k
            + b_x[..., idx] * kernel.grad_y_coord(idx, x_block, values)
            + b_y[..., idx] * kernel.grad_x_coord(idx, x_block, values)
            + kernel.grad_xy_coord(idx, x_block, values)
        )
    _check_finite(out, "block Stein kernel", block)

    if x.ndim == 1 and y.ndim == 1:
        return float(out[0, 0])
    return out


def _draw(sampler: ConditionalSampler, j: int, data: np.ndarray, n_y: int,
          rng: np.random.Generator) -> np.ndarray:
    """Draw auxiliaries for coordinate j and check them"""
    try:
        draws = np.asarray(sampler.sample(j, data, n_y, rng), dtype=float)
    except SteinccError:
        raise
    except Exception as e:
        logger.error(f"Conditional sampler failed for coordinate {j}: {e}")
        raise EstimationError(f"Conditional sampler failed for coordinate {j}: {e}") from e
    if draws.shape != (data.shape[0], n_y):
        raise EstimationError(
            f"Conditional sampler returned shape {draws.shape} for coordinate {j}, "
            f"expected {(data.shape[0], n_y)}"
        )
    _check_finite(draws, "auxiliary draw", j)
    return draws


def coordinate_means(
    data,
    target: Target,
    sampler: ConditionalSampler,
    kernel: KernelSpec,
    n_y: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> np.ndarray:
    """
    Per-row, per-coordinate averages of the conditional Stein kernel

    Entry (i, j) is (1/n_y) sum_k k_cc^j(x_j^(i), y_j^(i,k); x_{-j}^(i)) with fresh
    auxiliaries y from the sampler. Coordinate j draws from the j-th substream
    spawned from rng, so the result does not depend on the worker count.

    Returns:
        Matrix of shape (n, d)
    """
    data = _rows(data)
    n, d = data.shape
    if n_y < 1:
        raise ConfigurationError(f"n_y must be at least 1, got {n_y}")
    kernels = _coordinate_kernels(kernel, d)
    streams = rng.spawn(d)

    def one_coordinate(j: int) -> np.ndarray:
        draws = _draw(sampler, j, data, n_y, streams[j])
        return np.mean(cc_stein_kernel(j, data, draws, target, kernels[j]), axis=1)

    columns = run_parallel(one_coordinate, range(d), workers=workers)
    return np.stack(columns, axis=1)


def estimate_kccsd(
    data,
    target: Target,
    sampler: ConditionalSampler,
    kernel: KernelSpec,
    n_y: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> DiscrepancyEstimate:
    """
    Estimate KCC-SD with auxiliary draws from a conditional sampler

    Args:
        data: Sample from q, shape (n, d)
        target: Target p
        sampler: Complete conditionals of q (exact or learned)
        kernel: Univariate kernel, or one per coordinate
        n_y: Auxiliary draws per row and coordinate
        rng: Random generator
        workers: Threads used across coordinates

    Returns:
        DiscrepancyEstimate with per-coordinate weights and their sum
    """
    means = coordinate_means(data, target, sampler, kernel, n_y, rng, workers)
    estimate = DiscrepancyEstimate.from_weights(np.mean(means, axis=0), n=means.shape[0], n_y=n_y)
    logger.debug(f"KCC-SD weights: {np.array2string(estimate.weights, precision=4)}")
    return estimate


def ksd_stein_gram(data, target: Target, kernel: Kernel) -> Tuple[np.ndarray, np.ndarray]:
    """
    KSD Stein-kernel matrix summed over coordinates

    Args:
        data: Sample of shape (n, d)
        target: Target p
        kernel: Radial kernel on R^d (a univariate kernel is lifted)

    Returns:
        Tuple (gram, weights): the (n, n) matrix of sum_j k_0^j(x_a, x_b) and the
        per-coordinate V-statistic weights of shape (d,)
    """
    X = _rows(data)
    n, d = X.shape
    kernel = _kernel_for_dim(kernel, d)
    scores = target.score(X)
    _check_finite(scores, "score", "all")

    phi, dphi, ddphi = kernel.radial_terms(cdist(X, X, metric="sqeuclidean"))
    gram = np.zeros((n, n))
    weights = np.zeros(d)
    for j in range(d):
        diff = X[:, j, None] - X[None, :, j]
        b_a = scores[:, j, None]
        b_b = scores[None, :, j]
        grad_x = 2.0 * diff * dphi
        k0 = b_a * b_b * phi - b_a * grad_x + b_b * grad_x - 2.0 * dphi - 4.0 * diff ** 2 * ddphi
        _check_finite(k0, "KSD Stein kernel", j)
        gram += k0
        weights[j] = np.mean(k0)
    return gram, weights


def estimate_ksd(data, target: Target, kernel: Kernel, statistic: str = "v") -> float:
    """
    Estimate KSD as the Euclidean norm of the per-coordinate weights

    Args:
        data: Sample of shape (n, d), n >= 2
        target: Target p
        kernel: Kernel on R^d
        statistic: 'v' (all ordered pairs, diagonal included) or 'u' (off-diagonal pairs)

    Returns:
        ||w||_2; a negative U-statistic is clipped to 0 before the square root
    """
    X = _rows(data)
    n = X.shape[0]
    if n < 2:
        raise ConfigurationError(f"KSD needs at least two rows, got {n}")
    gram, weights = ksd_stein_gram(X, target, kernel)
    if statistic == "v":
        squared = float(np.sum(weights))
    elif statistic == "u":
        squared = float((np.sum(gram) - np.trace(gram)) / (n * (n - 1)))
    else:
        raise ConfigurationError(f"Unknown KSD statistic: {statistic} (use 'v' or 'u')")
    if squared < 0:
        logger.debug(f"KSD {statistic}-statistic is negative ({squared:.3e}); clipped to 0")
    return float(np.sqrt(max(squared, 0.0)))


def validate_partition(partition: Sequence[Sequence[int]], d: int) -> List[List[int]]:
    """
    Check that blocks cover 0..d-1 disjointly

    Returns:
        The partition as a list of integer lists

    Raises:
        ConfigurationError: On empty, overlapping, out-of-range or missing indices
    """
    blocks = [[int(i) for i in block] for block in partition]
    seen = set()
    for block in blocks:
        if not block:
            raise ConfigurationError("Partition contains an empty block")
        for i in block:
            if not 0 <= i < d:
                raise ConfigurationError(f"Block index {i} out of range for dimension {d}")
            if i in seen:
                raise ConfigurationError(f"Coordinate {i} appears in more than one block")
            seen.add(i)
    if len(seen) != d:
        missing = sorted(set(range(d)) - seen)
        raise ConfigurationError(f"Partition does not cover coordinates {missing}")
    return blocks


def estimate_block_kccsd(
    data,
    partition: Sequence[Sequence[int]],
    target: Target,
    sampler: BlockConditionalSampler,
    kernel: KernelSpec,
    n_y: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> DiscrepancyEstimate:
    """
    Estimate block KCC-SD

    Block i draws its auxiliaries from the i-th substream spawned from rng,
    so an all-singleton partition reproduces estimate_kccsd.

    Args:
        data: Sample of shape (n, d)
        partition: Disjoint blocks covering every coordinate
        target: Target p
        sampler: Block conditionals of q
        kernel: One kernel (lifted to each block's size) or one kernel per block
        n_y: Auxiliary draws per row and block
        rng: Random generator
        workers: Threads used across blocks

    Returns:
        DiscrepancyEstimate with one weight per block
    """
    data = _rows(data)
    n, d = data.shape
    blocks = validate_partition(partition, d)
    if n_y < 1:
        raise ConfigurationError(f"n_y must be at least 1, got {n_y}")
    kernels = [kernel] * len(blocks) if isinstance(kernel, Kernel) else list(kernel)
    if len(kernels) != len(blocks):
        raise ConfigurationError(f"Expected {len(blocks)} block kernels, got {len(kernels)}")
    streams = rng.spawn(len(blocks))

    def one_block(i: int) -> float:
        block = blocks[i]
        draws = np.asarray(sampler.sample_block(block, data, n_y, streams[i]), dtype=float)
        if draws.shape != (n, n_y, len(block)):
            raise EstimationError(
                f"Block sampler returned shape {draws.shape} for block {block}, "
                f"expected {(n, n_y, len(block))}"
            )
        _check_finite(draws, "auxiliary draw", block)
        return float(np.mean(np.mean(block_stein_kernel(block, data, draws, target, kernels[i]), axis=1)))

    weights = run_parallel(one_block, range(len(blocks)), workers=workers)
    return DiscrepancyEstimate.from_weights(np.asarray(weights), n=n, n_y=n_y)


def optimal_test_function(
    j: int,
    context,
    grid,
    sampler: ConditionalSampler,
    target: Target,
    kernel: Kernel,
    n_mc: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Monte-Carlo estimate of the supremum-achieving test function of coordinate j

    f*(u) = E_{y ~ q(. | x_{-j})}[k(u, y) b(y) + dk/dy(u, y)], with one shared set
    of n_mc conditional draws for every grid point.

    Args:
        j: Coordinate index
        context: The other d - 1 coordinates, in order
        grid: Points u at which to evaluate, shape (g,)
        sampler: Conditionals of q
        target: Target p
        kernel: Univariate kernel
        n_mc: Number of conditional draws
        rng: Random generator

    Returns:
        Array of shape (g,)
    """
    if n_mc < 1:
        raise ConfigurationError(f"n_mc must be at least 1, got {n_mc}")
    d = target.dim
    _check_coordinate(j, d)
    context = np.asarray(context, dtype=float).reshape(-1)
    if context.shape[0] != d - 1:
        raise ValueError(f"Expected {d - 1} context values, got {context.shape[0]}")
    row = np.insert(context, j, 0.0)[None, :]
    draws = _draw(sampler, j, row, n_mc, rng)
    b_y = target.conditional_score(j, row, draws)[0]

    u = np.asarray(grid, dtype=float).reshape(-1, 1)
    y = draws[0][None, :]
    return np.mean(kernel.eval(u, y) * b_y + kernel.grad_y(u, y), axis=1)
