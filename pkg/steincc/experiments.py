"""
Experiment runner: maps each experiment id to a scenario and collects result rows
"""

import csv
import logging
import sys
import time
from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np
from scipy import stats

from .cond_model import estimate_approx_kccsd
from .config import ExperimentSpec
from .errors import ConfigurationError
from .gof import TestScenario, run_repetitions
from .kernels import get_kernel
from .models import CSV_HEADER, ResultRow
from .mwg import bias_sweep
from .stein import estimate_kccsd
from .targets import (
    CorrelatedGaussian,
    GaussianConditionals,
    GmmPosterior,
    LaplaceNoiseGaussian,
    LaplaceProduct,
    ProductConditionals,
)

logger = logging.getLogger(__name__)


class _Clock:
    """Wall-time source that reads 0 when timing is disabled"""

    def __init__(self, enabled: bool):
        self.enabled = enabled
        self._start = 0.0

    def start(self) -> None:
        self._start = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self._start if self.enabled else 0.0

    def seconds(self, value: float) -> float:
        return value if self.enabled else 0.0


def _row(spec: ExperimentSpec, dim: int, n: int, param: Optional[float], metric: str,
         value: float, seconds: float, seed: Optional[int] = None) -> ResultRow:
    return ResultRow(
        experiment=spec.experiment,
        method=spec.method,
        kernel=spec.kernel,
        dim=dim,
        n=n,
        param=param,
        metric=metric,
        value=float(value),
        seed=spec.seed if seed is None else seed,
        seconds=seconds,
    )


def _scenario(spec: ExperimentSpec, target, source, sampler=None) -> TestScenario:
    return TestScenario(
        target=target,
        source=source,
        method=spec.method,
        kernel_name=spec.kernel,
        bandwidth=spec.bandwidth,
        imq_c=spec.imq_c,
        imq_beta=spec.imq_beta,
        sampler=sampler if spec.method == "kccsd-exact" else None,
        train_config=spec.train_config() if spec.method == "kccsd-approx" else None,
        n_y=spec.n_y,
    )


def _gaussian_vs_laplace(spec: ExperimentSpec, d: int) -> TestScenario:
    source = LaplaceProduct(d)
    return _scenario(spec, CorrelatedGaussian.standard(d), source, ProductConditionals(source))


def _laplace_noise(spec: ExperimentSpec, d: int) -> TestScenario:
    source = LaplaceNoiseGaussian(d, spec.rho)
    return _scenario(spec, source.matching_gaussian(), source)


def _power_rows(spec: ExperimentSpec, build: Callable[[ExperimentSpec, int], TestScenario],
                rng: np.random.Generator, clock: _Clock) -> List[ResultRow]:
    cells = [(d, n) for d in spec.dims for n in spec.ns]
    rows = []
    for (d, n), cell_rng in zip(cells, rng.spawn(len(cells))):
        clock.start()
        results = run_repetitions(build(spec, d), n, spec.n_reps, spec.alpha, spec.bootstrap_l, cell_rng,
                                  workers=spec.threads, processes=spec.threads > 1)
        power = float(np.mean([r.p_value < spec.alpha for r in results]))
        logger.info(f"{spec.experiment} d={d} n={n}: power {power:.3f}")
        rows.append(_row(spec, d, n, None, "power", power, clock.elapsed()))
    return rows


def _null_calibration(spec: ExperimentSpec, rng: np.random.Generator, clock: _Clock) -> List[ResultRow]:
    cells = [(d, n) for d in spec.dims for n in spec.ns]
    rows = []
    for (d, n), cell_rng in zip(cells, rng.spawn(len(cells))):
        gaussian = CorrelatedGaussian.equicorrelated(d, spec.rho)
        scenario = _scenario(spec, gaussian, gaussian, GaussianConditionals(gaussian))
        clock.start()
        results = run_repetitions(scenario, n, spec.n_reps, spec.alpha, spec.bootstrap_l, cell_rng,
                                  workers=spec.threads, processes=spec.threads > 1)
        elapsed = clock.elapsed()

        p_values = np.array([r.p_value for r in results])
        for rep, result in enumerate(results):
            rows.append(_row(spec, d, n, rep, "p_value", result.p_value, clock.seconds(result.seconds)))
        rate = float(np.mean(p_values < spec.alpha))
        ks_pvalue = float(stats.kstest(p_values, "uniform").pvalue)
        logger.info(f"null-calibration d={d} n={n}: rejection rate {rate:.3f}, KS p-value {ks_pvalue:.3f}")
        rows.append(_row(spec, d, n, None, "rejection_rate", rate, elapsed))
        rows.append(_row(spec, d, n, None, "ks_pvalue", ks_pvalue, elapsed))
    return rows


def _discrepancy_vs_n(spec: ExperimentSpec, rng: np.random.Generator, clock: _Clock) -> List[ResultRow]:
    kernel = get_kernel(spec.kernel, spec.bandwidth, spec.imq_c, spec.imq_beta)
    cells = [(d, n) for d in spec.dims for n in spec.ns]
    rows = []
    for (d, n), cell_rng in zip(cells, rng.spawn(len(cells))):
        target = CorrelatedGaussian.standard(d)
        source = CorrelatedGaussian.equicorrelated(d, spec.rho)
        sampler = GaussianConditionals(source)
        estimates = []
        for rep, rep_rng in enumerate(cell_rng.spawn(spec.n_reps)):
            clock.start()
            data_rng, estimate_rng = rep_rng.spawn(2)
            data = source.sample(n, data_rng)
            if spec.method == "kccsd-exact":
                estimate = estimate_kccsd(data, target, sampler, kernel, spec.n_y, estimate_rng, spec.threads)
            else:
                estimate = estimate_approx_kccsd(data, target, spec.train_config(), kernel, spec.n_y,
                                                 estimate_rng, spec.threads)
            estimates.append(estimate.total)
            rows.append(_row(spec, d, n, rep, "kccsd", estimate.total, clock.elapsed()))
        logger.info(f"discrepancy-vs-n d={d} n={n}: mean KCC-SD {np.mean(estimates):.5f}")
        rows.append(_row(spec, d, n, None, "kccsd_mean", float(np.mean(estimates)), 0.0))
    return rows


def _mwg_bias(spec: ExperimentSpec, rng: np.random.Generator, clock: _Clock) -> List[ResultRow]:
    kernel = get_kernel(spec.kernel, spec.bandwidth, spec.imq_c, spec.imq_beta)
    data_rng, sweep_rng = rng.spawn(2)
    rows = []
    for n_obs in spec.ns:
        posterior = GmmPosterior.simulate(data_rng, theta=(1.0, -1.0), n_obs=n_obs, variance=2.0)
        clock.start()
        sweep = bias_sweep(posterior, spec.biases, spec.mwg_config(), spec.n_y, kernel,
                           seeds=range(spec.n_reps), rng=sweep_rng,
                           workers=spec.threads, processes=spec.threads > 1)
        elapsed = clock.elapsed()
        for cell in sweep.cells:
            rows.append(_row(spec, 2, n_obs, cell.bias, "kccsd", cell.estimate, 0.0, seed=cell.seed))
        for bias, mean in sweep.means.items():
            rows.append(_row(spec, 2, n_obs, bias, "kccsd_mean", mean, elapsed))
    return rows


def run_experiment(spec: ExperimentSpec) -> List[ResultRow]:
    """
    Run one experiment

    All randomness derives from spec.seed. With spec.record_time False every
    seconds field is 0, so the rows depend on the settings alone.

    Args:
        spec: Validated experiment spec

    Returns:
        List of ResultRow in a fixed order
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    clock = _Clock(spec.record_time)
    logger.info(f"Running {spec.experiment} with {spec.method}/{spec.kernel} (seed {spec.seed})")
    start = time.perf_counter()

    if spec.experiment in ("power-vs-dim", "power-vs-n"):
        rows = _power_rows(spec, _gaussian_vs_laplace, rng, clock)
    elif spec.experiment == "laplace-noise-power":
        rows = _power_rows(spec, _laplace_noise, rng, clock)
    elif spec.experiment == "null-calibration":
        rows = _null_calibration(spec, rng, clock)
    elif spec.experiment == "discrepancy-vs-n":
        rows = _discrepancy_vs_n(spec, rng, clock)
    elif spec.experiment == "mwg-bias":
        rows = _mwg_bias(spec, rng, clock)
    else:
        raise ConfigurationError(f"Unknown experiment: {spec.experiment}")

    logger.info(f"{spec.experiment} finished: {len(rows)} rows in {time.perf_counter() - start:.1f}s")
    return rows


def emit_csv(rows: List[ResultRow], path: Union[str, Path]) -> None:
    """
    Write rows as CSV with a header line and '\\n' line endings

    Args:
        rows: Result rows
        path: Destination file, or '-' for stdout
    """
    if str(path) == "-":
        _write_rows(rows, sys.stdout)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        _write_rows(rows, f)
    logger.info(f"Wrote {len(rows)} rows to {path}")


def _write_rows(rows: List[ResultRow], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.to_csv_fields())


def read_csv(path: Union[str, Path]) -> List[ResultRow]:
    """
    Parse a file written by emit_csv

    Raises:
        ConfigurationError: If the header does not match
    """
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ConfigurationError(f"{path} is not a steincc result file (header {header})")
        return [ResultRow.from_csv_fields(values) for values in reader]
