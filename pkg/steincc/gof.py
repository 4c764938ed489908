"""
Wild-bootstrap goodness-of-fit tests and the power harness
"""

from dataclasses import dataclass
from typing import List, Optional
import logging
import math
import time

import numpy as np

from .config import TrainConfig
from .cond_model import fit_and_hold_out
from .errors import ConfigurationError
from .kernels import Kernel, get_kernel, median_heuristic
from .models import GofResult, HValues
from .stein import KernelSpec, coordinate_means, ksd_stein_gram
from .targets import ConditionalSampler, Distribution, Target
from .workers import run_parallel

logger = logging.getLogger(__name__)


def compute_h(
    data,
    target: Target,
    sampler: ConditionalSampler,
    kernel: KernelSpec,
    n_y: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> HValues:
    """
    Per-row summands h(x_i) = sum_j (1/n_y) sum_k k_cc^j(x_j^(i), y_j^(i,k); x_{-j}^(i))

    Consumes rng exactly as estimate_kccsd does, so the mean of h equals the
    KCC-SD estimate for the same generator state.
    """
    return HValues(np.sum(coordinate_means(data, target, sampler, kernel, n_y, rng, workers), axis=1))


def rademacher(shape, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. +-1 draws"""
    return 1.0 - 2.0 * rng.integers(0, 2, size=shape)


def wild_bootstrap(h: HValues, L: int, rng: np.random.Generator, signs=None) -> np.ndarray:
    """
    Replicates R = (1/n) sum_i eps_i h_i with fresh Rademacher signs per replicate

    Args:
        h: Per-row values
        L: Number of replicates
        rng: Random generator (unused when signs are given)
        signs: Optional fixed (L, n) sign matrix

    Returns:
        Array of shape (L,)
    """
    if L < 1:
        raise ConfigurationError(f"L must be at least 1, got {L}")
    values = np.asarray(h.values if isinstance(h, HValues) else h, dtype=float)
    n = values.shape[0]
    eps = rademacher((L, n), rng) if signs is None else np.asarray(signs, dtype=float).reshape(L, n)
    # row-wise mean matches HValues.statistic bit for bit when all signs are +1
    return np.mean(eps * values, axis=1)


def empirical_quantile(replicates, alpha: float) -> float:
    """
    Upper (1 - alpha) order statistic of the replicates

    With replicates sorted ascending and 0-based indexing this is element
    min(ceil((1 - alpha) L), L - 1).
    """
    ordered = np.sort(np.asarray(replicates, dtype=float))
    L = ordered.shape[0]
    index = min(math.ceil((1.0 - alpha) * L - 1e-9), L - 1)
    return float(ordered[index])


def decide(statistic: float, replicates, alpha: float, seconds: float = 0.0) -> GofResult:
    """
    Turn a statistic and its bootstrap replicates into a test outcome

    The p-value counts replicates strictly greater than the statistic; the
    rejection uses the quantile rule.
    """
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must be in (0, 1), got {alpha}")
    replicates = np.asarray(replicates, dtype=float)
    threshold = empirical_quantile(replicates, alpha)
    return GofResult(
        statistic=float(statistic),
        replicates=replicates,
        p_value=float(np.mean(replicates > statistic)),
        reject=bool(statistic > threshold),
        alpha=alpha,
        threshold=threshold,
        seconds=seconds,
    )


def gof_test(
    data,
    target: Target,
    sampler: ConditionalSampler,
    kernel: KernelSpec,
    n_y: int,
    L: int,
    alpha: float,
    rng: np.random.Generator,
    workers: int = 1,
) -> GofResult:
    """
    KCC-SD wild-bootstrap test of H0: the data come from the target

    The same auxiliary draws serve the statistic and every replicate.
    """
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must be in (0, 1), got {alpha}")
    start = time.perf_counter()
    h_rng, boot_rng = rng.spawn(2)
    h = compute_h(data, target, sampler, kernel, n_y, h_rng, workers)
    replicates = wild_bootstrap(h, L, boot_rng)
    return decide(h.statistic, replicates, alpha, time.perf_counter() - start)


def ksd_gof_test(data, target: Target, kernel: Kernel, L: int, alpha: float,
                 rng: np.random.Generator, signs=None) -> GofResult:
    """
    KSD wild-bootstrap test on the degenerate V-statistic

    Statistic n V_n with V_n the mean of the summed Stein-kernel matrix H;
    replicates eps^T H eps / n.
    """
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must be in (0, 1), got {alpha}")
    if L < 1:
        raise ConfigurationError(f"L must be at least 1, got {L}")
    start = time.perf_counter()
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if n < 2:
        raise ConfigurationError(f"KSD test needs at least two rows, got {n}")
    gram, _ = ksd_stein_gram(data, target, kernel)
    statistic = float(np.sum(gram) / n)
    eps = rademacher((L, n), rng) if signs is None else np.asarray(signs, dtype=float).reshape(L, n)
    replicates = np.sum((eps @ gram) * eps, axis=1) / n
    return decide(statistic, replicates, alpha, time.perf_counter() - start)


@dataclass
class TestScenario:
    """
    A goodness-of-fit scenario: target p, sampling distribution q and a test method

    method is 'kccsd-exact' (needs sampler, the exact conditionals of q),
    'kccsd-approx' (fits conditionals on a training split) or 'ksd'.
    KCC-SD uses a univariate kernel with bandwidth (default 1); KSD uses the
    median heuristic unless bandwidth is given.
    """
    __test__ = False

    target: Target
    source: Distribution
    method: str = "kccsd-exact"
    kernel_name: str = "rbf"
    bandwidth: Optional[float] = None
    imq_c: float = 1.0
    imq_beta: float = 0.5
    sampler: Optional[ConditionalSampler] = None
    train_config: Optional[TrainConfig] = None
    n_y: int = 5
    workers: int = 1

    def __post_init__(self):
        if self.method == "kccsd-exact" and self.sampler is None:
            raise ConfigurationError("kccsd-exact needs the exact conditionals of the sampling distribution")
        if self.method == "kccsd-approx" and self.train_config is None:
            self.train_config = TrainConfig()
        if self.method not in ("kccsd-exact", "kccsd-approx", "ksd"):
            raise ConfigurationError(f"Unknown method: {self.method}")
        if self.target.dim != self.source.dim:
            raise ConfigurationError(
                f"Target dimension {self.target.dim} differs from sample dimension {self.source.dim}"
            )

    def kernel_for(self, data: np.ndarray) -> Kernel:
        """Kernel used on this data set"""
        if self.method == "ksd":
            bandwidth = self.bandwidth
            if bandwidth is None and self.kernel_name == "rbf":
                bandwidth = median_heuristic(data)
            return get_kernel(self.kernel_name, bandwidth, self.imq_c, self.imq_beta, dim=data.shape[1])
        return get_kernel(self.kernel_name, self.bandwidth, self.imq_c, self.imq_beta)

    def run(self, n: int, alpha: float, L: int, rng: np.random.Generator) -> GofResult:
        """Draw n rows from the source and test them against the target"""
        start = time.perf_counter()
        data_rng, test_rng = rng.spawn(2)
        data = self.source.sample(n, data_rng)

        if self.method == "ksd":
            result = ksd_gof_test(data, self.target, self.kernel_for(data), L, alpha, test_rng)
        elif self.method == "kccsd-exact":
            result = gof_test(data, self.target, self.sampler, self.kernel_for(data),
                              self.n_y, L, alpha, test_rng, self.workers)
        else:
            fit_rng, inner_rng = test_rng.spawn(2)
            test_rows, fitted = fit_and_hold_out(data, self.train_config, fit_rng, self.workers)
            result = gof_test(test_rows, self.target, fitted, self.kernel_for(test_rows),
                              self.n_y, L, alpha, inner_rng, self.workers)

        # elapsed time includes data generation and model training
        return GofResult(
            statistic=result.statistic,
            replicates=result.replicates,
            p_value=result.p_value,
            reject=result.reject,
            alpha=result.alpha,
            threshold=result.threshold,
            seconds=time.perf_counter() - start,
        )


def _run_repetition(task) -> GofResult:
    scenario, n, alpha, L, rng = task
    return scenario.run(n, alpha, L, rng)


def run_repetitions(scenario, n: int, n_reps: int, alpha: float, L: int, rng: np.random.Generator,
                    workers: int = 1, processes: bool = False) -> List[GofResult]:
    """
    Run a scenario n_reps times on fresh data

    Repetition r uses the r-th substream spawned from rng, so results do not
    depend on the worker count.
    """
    if n_reps < 1:
        raise ConfigurationError(f"n_reps must be at least 1, got {n_reps}")
    tasks = [(scenario, n, alpha, L, stream) for stream in rng.spawn(n_reps)]
    return run_parallel(_run_repetition, tasks, workers=workers, processes=processes)


def estimate_power(scenario, n: int, n_reps: int, alpha: float, L: int, rng: np.random.Generator,
                   workers: int = 1, processes: bool = False) -> float:
    """
    Fraction of repetitions whose p-value is below alpha

    Args:
        scenario: Any object with run(n, alpha, L, rng) -> GofResult
        n: Rows per repetition
        n_reps: Number of repetitions
        alpha: Significance level
        L: Bootstrap replicates per test
        rng: Random generator
        workers: Pool size across repetitions
        processes: Use processes instead of threads

    Returns:
        Rejection rate in [0, 1]
    """
    results = run_repetitions(scenario, n, n_reps, alpha, L, rng, workers, processes)
    power = float(np.mean([r.p_value < alpha for r in results]))
    logger.info(f"Power {power:.3f} over {n_reps} repetitions (n={n}, alpha={alpha})")
    return power
