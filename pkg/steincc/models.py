"""
Result data models for steincc
"""

from dataclasses import dataclass, asdict, field
from typing import Any, Dict, List, Optional

import numpy as np

CSV_HEADER = ("experiment", "method", "kernel", "dim", "n", "param", "metric", "value", "seed", "seconds")


@dataclass(frozen=True)
class DiscrepancyEstimate:
    """KCC-SD estimate: per-coordinate (or per-block) squared weights and their sum"""
    weights: np.ndarray
    total: float
    n: int
    n_y: int

    @classmethod
    def from_weights(cls, weights: np.ndarray, n: int, n_y: int) -> "DiscrepancyEstimate":
        # Fixed-order reduction keeps totals bit-reproducible
        weights = np.asarray(weights, dtype=float)
        total = float(np.sum(weights))
        return cls(weights=weights, total=total, n=n, n_y=n_y)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["weights"] = self.weights.tolist()
        return data


@dataclass(frozen=True)
class HValues:
    """Per-row values h(x_i) whose mean is the KCC-SD test statistic"""
    values: np.ndarray

    @property
    def statistic(self) -> float:
        """T_n, the mean of h"""
        return float(np.mean(self.values))

    @property
    def standard_error(self) -> float:
        """Monte-Carlo standard error of T_n"""
        n = self.values.shape[0]
        if n < 2:
            return float("nan")
        return float(np.std(self.values, ddof=1) / np.sqrt(n))

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class GofResult:
    """Outcome of one wild-bootstrap goodness-of-fit test"""
    statistic: float
    replicates: np.ndarray
    p_value: float
    reject: bool
    alpha: float
    threshold: float
    seconds: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        """
        Convert to a plain dictionary (bootstrap replicates omitted)

        Returns:
            Dictionary with scalar values only
        """
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "reject": self.reject,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "n_replicates": int(self.replicates.shape[0]),
            "seconds": self.seconds,
        }


@dataclass(frozen=True)
class ChainOutput:
    """
    Retained Metropolis-within-Gibbs states and their auxiliary draws

    samples has shape (retained, d); auxiliaries has shape (retained, d, n_y),
    where auxiliaries[i, j, k] is the k-th one-step Metropolis move of coordinate
    j started from samples[i].
    """
    samples: np.ndarray
    auxiliaries: np.ndarray
    acceptance_rates: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def thinned(self, every: int) -> "ChainOutput":
        """Keep every `every`-th retained state together with its auxiliaries"""
        return ChainOutput(
            samples=self.samples[::every],
            auxiliaries=self.auxiliaries[::every],
            acceptance_rates=self.acceptance_rates,
        )


@dataclass(frozen=True)
class ResultRow:
    """One metric of one experiment cell, as written to CSV"""
    experiment: str
    method: str
    kernel: str
    dim: int
    n: int
    param: Optional[float]
    metric: str
    value: float
    seed: int
    seconds: float

    def to_csv_fields(self) -> List[str]:
        """
        Render the row as CSV fields

        Reals use 10 significant digits; a missing scenario parameter is written as "none".

        Returns:
            List of strings in CSV_HEADER order
        """
        return [
            self.experiment,
            self.method,
            self.kernel,
            str(self.dim),
            str(self.n),
            "none" if self.param is None else format_real(self.param),
            self.metric,
            format_real(self.value),
            str(self.seed),
            format_real(self.seconds),
        ]

    @classmethod
    def from_csv_fields(cls, values: List[str]) -> "ResultRow":
        """
        Parse fields written by to_csv_fields

        Args:
            values: List of strings in CSV_HEADER order

        Returns:
            ResultRow instance
        """
        data = dict(zip(CSV_HEADER, values))
        return cls(
            experiment=data["experiment"],
            method=data["method"],
            kernel=data["kernel"],
            dim=int(data["dim"]),
            n=int(data["n"]),
            param=None if data["param"] == "none" else float(data["param"]),
            metric=data["metric"],
            value=float(data["value"]),
            seed=int(data["seed"]),
            seconds=float(data["seconds"]),
        )


def format_real(value: float) -> str:
    """Format a real with 10 significant digits (1.0 -> '1.000000000')"""
    return f"{float(value):#.10g}"


@dataclass(frozen=True)
class SweepCell:
    """KCC-SD of one biased chain"""
    bias: float
    seed: int
    estimate: float
    standard_error: float
    acceptance_rates: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class BiasSweep:
    """Per-(bias, seed) cells of a bias sweep and the mean estimate per bias"""
    cells: List[SweepCell]

    @property
    def means(self) -> Dict[float, float]:
        """Mean KCC-SD across seeds, keyed by bias in sweep order"""
        grouped: Dict[float, List[float]] = {}
        for cell in self.cells:
            grouped.setdefault(cell.bias, []).append(cell.estimate)
        return {bias: float(np.mean(values)) for bias, values in grouped.items()}
