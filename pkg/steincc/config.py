"""
Configuration management for steincc
"""

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import tomli_w
import logging
import os
from dataclasses import dataclass, asdict, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

ENV_PREFIX = "STEINCC_"

EXPERIMENTS = (
    "power-vs-dim",
    "power-vs-n",
    "null-calibration",
    "discrepancy-vs-n",
    "laplace-noise-power",
    "mwg-bias",
)
METHODS = ("kccsd-exact", "kccsd-approx", "ksd")
KERNELS = ("rbf", "imq")
DEFAULT_N_Y = 5

# Desk-scale defaults per experiment, used for any field left unset.
# laplace-noise-power runs coarse bins and more auxiliary draws per row.
EXPERIMENT_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "power-vs-dim": {"method": "kccsd-approx", "dims": [5, 15, 30], "ns": [1000], "n_reps": 100},
    "power-vs-n": {"method": "kccsd-approx", "dims": [30], "ns": [200, 500, 1000], "n_reps": 100},
    "null-calibration": {"method": "kccsd-exact", "dims": [10], "ns": [500], "n_reps": 200},
    "discrepancy-vs-n": {"method": "kccsd-exact", "dims": [30], "ns": [500, 1000, 2000], "n_reps": 5},
    "laplace-noise-power": {"method": "kccsd-approx", "dims": [5, 15], "ns": [500], "n_reps": 100,
                            "bins": 8, "n_y": 50},
    "mwg-bias": {"method": "kccsd-exact", "dims": [2], "ns": [100], "n_reps": 10,
                 "iterations": 6000, "burn_in": 5000},
}


@dataclass(frozen=True)
class TrainConfig:
    """Training settings for the histogram conditional models"""
    epochs: int = 500
    learning_rate: float = 0.1
    bins: int = 20
    hidden: int = 15
    fractions: Tuple[float, float, float] = (0.2, 0.1, 0.7)
    interval_margin: float = 0.05

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be non-negative, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.bins < 1:
            raise ConfigurationError(f"bins must be at least 1, got {self.bins}")
        if self.hidden < 1:
            raise ConfigurationError(f"hidden must be at least 1, got {self.hidden}")
        if self.interval_margin < 0:
            raise ConfigurationError(f"interval_margin must be non-negative, got {self.interval_margin}")
        fractions = tuple(float(f) for f in self.fractions)
        if len(fractions) != 3 or any(f <= 0 for f in fractions):
            raise ConfigurationError(f"fractions must be three positive numbers, got {self.fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigurationError(f"fractions must sum to 1, got {sum(fractions)}")
        object.__setattr__(self, "fractions", fractions)


@dataclass(frozen=True)
class MwgConfig:
    """Metropolis-within-Gibbs chain settings"""
    iterations: int = 60000
    burn_in: int = 50000
    proposal_std: float = 0.5
    bias: float = 0.0
    thin: int = 10

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be positive, got {self.iterations}")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigurationError(
                f"burn_in must be in [0, iterations), got {self.burn_in} for {self.iterations} iterations"
            )
        if self.proposal_std < 0:
            raise ConfigurationError(f"proposal_std must be non-negative, got {self.proposal_std}")
        if self.bias < 0:
            raise ConfigurationError(f"bias must be non-negative, got {self.bias}")
        if self.thin < 1:
            raise ConfigurationError(f"thin must be at least 1, got {self.thin}")

    @property
    def retained(self) -> int:
        """Number of post-burn-in states"""
        return self.iterations - self.burn_in


@dataclass
class ExperimentSpec:
    """
    One experiment run of the command-line harness

    Fields left as None are filled from EXPERIMENT_DEFAULTS
    for the chosen experiment.
    """
    experiment: str = "power-vs-dim"
    method: Optional[str] = None
    kernel: str = "rbf"
    dims: Optional[List[int]] = None
    ns: Optional[List[int]] = None
    biases: List[float] = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.2])
    n_reps: Optional[int] = None
    alpha: float = 0.05
    bootstrap_l: int = 500
    n_y: Optional[int] = None
    seed: int = 0
    bandwidth: Optional[float] = None
    imq_c: float = 1.0
    imq_beta: float = 0.5
    rho: float = 0.5
    bins: Optional[int] = None
    hidden: int = 15
    epochs: int = 500
    learning_rate: float = 0.1
    iterations: Optional[int] = None
    burn_in: Optional[int] = None
    thin: int = 10
    proposal_std: float = 0.5
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    record_time: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(
                f"Unknown experiment: {self.experiment}. Choose from: {', '.join(EXPERIMENTS)}"
            )
        for name, value in EXPERIMENT_DEFAULTS[self.experiment].items():
            if getattr(self, name) is None:
                setattr(self, name, list(value) if isinstance(value, list) else value)
        if self.iterations is None:
            self.iterations = MwgConfig.iterations
        if self.burn_in is None:
            self.burn_in = MwgConfig.burn_in
        if self.bins is None:
            self.bins = TrainConfig.bins
        if self.n_y is None:
            self.n_y = DEFAULT_N_Y
        self.validate()

    def validate(self) -> None:
        """
        Check value ranges

        Raises:
            ConfigurationError: If any field is out of range
        """
        if self.method not in METHODS:
            raise ConfigurationError(f"Unknown method: {self.method}. Choose from: {', '.join(METHODS)}")
        if self.kernel not in KERNELS:
            raise ConfigurationError(f"Unknown kernel: {self.kernel}. Choose from: {', '.join(KERNELS)}")
        for name in ("dims", "ns", "biases"):
            values = getattr(self, name)
            if not values:
                raise ConfigurationError(f"{name} must be a non-empty list")
        if any(d < 1 for d in self.dims):
            raise ConfigurationError(f"dims must be positive, got {self.dims}")
        if any(n < 2 for n in self.ns):
            raise ConfigurationError(f"ns must be at least 2, got {self.ns}")
        if any(b < 0 for b in self.biases):
            raise ConfigurationError(f"biases must be non-negative, got {self.biases}")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.n_reps < 1 or self.bootstrap_l < 1 or self.n_y < 1 or self.threads < 1:
            raise ConfigurationError("n_reps, bootstrap_l, n_y and threads must all be positive")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigurationError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.experiment == "laplace-noise-power" and self.method == "kccsd-exact":
            raise ConfigurationError(
                "laplace-noise-power has no exact complete conditionals; use kccsd-approx or ksd"
            )
        if self.experiment == "mwg-bias" and self.method != "kccsd-exact":
            raise ConfigurationError("mwg-bias uses the chain's Metropolis steps; method must be kccsd-exact")
        if self.experiment == "discrepancy-vs-n" and self.method == "ksd":
            raise ConfigurationError("discrepancy-vs-n reports KCC-SD values; method must be kccsd-*")

    def train_config(self) -> TrainConfig:
        """Build the TrainConfig for approximate KCC-SD"""
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            bins=self.bins,
            hidden=self.hidden,
        )

    def mwg_config(self, bias: float = 0.0) -> MwgConfig:
        """Build the MwgConfig for one bias level"""
        return MwgConfig(
            iterations=self.iterations,
            burn_in=self.burn_in,
            proposal_std=self.proposal_std,
            bias=bias,
            thin=self.thin,
        )

    @classmethod
    def from_env(cls, environ: Optional[Mapping[str, str]] = None, **overrides: Any) -> "ExperimentSpec":
        """
        Build settings from STEINCC_-prefixed environment variables

        Args:
            environ: Mapping to read from, defaults to os.environ
            overrides: Values that take precedence over the environment

        Returns:
            ExperimentSpec instance
        """
        if environ is None:
            environ = os.environ
        values = env_overrides(environ)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def load(cls, config_path: Path, **overrides: Any) -> "ExperimentSpec":
        """
        Load settings from a TOML file

        Args:
            config_path: Path to the TOML file
            overrides: Values that take precedence over the file

        Returns:
            ExperimentSpec instance

        Raises:
            ConfigurationError: If the file cannot be read or has unknown keys
        """
        try:
            with open(config_path, "rb") as f:
                data = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError) as e:
            logger.error(f"Failed to load config from {config_path}: {e}")
            raise ConfigurationError(f"Cannot read config file {config_path}: {e}") from e

        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"Unknown keys in {config_path}: {', '.join(sorted(unknown))}")

        data.update({k: v for k, v in overrides.items() if v is not None})
        logger.info(f"Loaded experiment configuration from {config_path}")
        return cls(**data)

    def save(self, config_path: Path) -> None:
        """
        Save the settings to a TOML file

        Args:
            config_path: Destination path
        """
        config_path.parent.mkdir(parents=True, exist_ok=True)

        # Remove None values as TOML doesn't support them
        data = {k: v for k, v in asdict(self).items() if v is not None}

        try:
            with open(config_path, "wb") as f:
                tomli_w.dump(data, f)
            logger.info(f"Saved experiment configuration to {config_path}")
        except Exception as e:
            logger.error(f"Failed to save config to {config_path}: {e}")
            raise


def _parse_env_value(name: str, raw: str, kind: Any) -> Any:
    """Convert one environment string to the field's type"""
    text = raw.strip()
    kind = str(kind)
    try:
        if "List[int]" in kind:
            return [int(v) for v in text.split(",") if v.strip()]
        if "List[float]" in kind:
            return [float(v) for v in text.split(",") if v.strip()]
        if "bool" in kind:
            return text.lower() in ("1", "true", "yes", "on")
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError as e:
        raise ConfigurationError(f"Invalid value for {ENV_PREFIX}{name.upper()}: {raw!r}") from e
    return text


def env_overrides(environ: Mapping[str, str]) -> Dict[str, Any]:
    """
    Collect ExperimentSpec fields set through STEINCC_ environment variables

    Args:
        environ: Environment mapping

    Returns:
        Dictionary of field name to parsed value
    """
    values: Dict[str, Any] = {}
    for spec_field in fields(ExperimentSpec):
        key = ENV_PREFIX + spec_field.name.upper()
        if key in environ:
            values[spec_field.name] = _parse_env_value(spec_field.name, environ[key], spec_field.type)
    return values
