"""
Learned complete conditionals and approximate KCC-SD

Each coordinate j gets a small classifier that maps the other coordinates to a
categorical distribution over m uniform bins covering the observed range of
x_j. Sampling picks a bin and returns its midpoint.
"""

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import tomli_w
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .config import TrainConfig
from .errors import ConfigurationError, EstimationError
from .kernels import Kernel
from .models import DiscrepancyEstimate
from .stein import estimate_kccsd
from .targets import ConditionalSampler, Target
from .workers import run_parallel

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass
class HistogramConditionalModel:
    """
    Two-layer sigmoid network predicting the bin of coordinate j

    W1 has shape (hidden, d - 1), b1 (hidden,), W2 (bins, hidden), b2 (bins,).
    """
    j: int
    lo: float
    hi: float
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ConfigurationError(f"Bin interval must have hi > lo, got [{self.lo}, {self.hi}]")
        self.W1 = np.asarray(self.W1, dtype=float).reshape(len(self.b1), -1)
        self.b1 = np.asarray(self.b1, dtype=float)
        self.W2 = np.asarray(self.W2, dtype=float)
        self.b2 = np.asarray(self.b2, dtype=float)
        if self.W2.shape != (self.b2.shape[0], self.b1.shape[0]):
            raise ConfigurationError(
                f"W2 shape {self.W2.shape} does not match {self.b2.shape[0]} bins and {self.b1.shape[0]} hidden units"
            )

    @classmethod
    def initialize(cls, j: int, n_inputs: int, lo: float, hi: float, bins: int, hidden: int,
                   rng: np.random.Generator) -> "HistogramConditionalModel":
        """Weights uniform in +-1/sqrt(fan_in), biases zero"""
        bound1 = 1.0 / np.sqrt(max(n_inputs, 1))
        bound2 = 1.0 / np.sqrt(hidden)
        return cls(
            j=j,
            lo=float(lo),
            hi=float(hi),
            W1=rng.uniform(-bound1, bound1, size=(hidden, n_inputs)),
            b1=np.zeros(hidden),
            W2=rng.uniform(-bound2, bound2, size=(bins, hidden)),
            b2=np.zeros(bins),
        )

    @property
    def bins(self) -> int:
        return self.b2.shape[0]

    @property
    def hidden(self) -> int:
        return self.b1.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.W1.shape[1]

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.bins

    @property
    def edges(self) -> np.ndarray:
        return self.lo + self.width * np.arange(self.bins + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.lo + self.width * (np.arange(self.bins) + 0.5)

    def copy(self) -> "HistogramConditionalModel":
        return HistogramConditionalModel(
            j=self.j, lo=self.lo, hi=self.hi,
            W1=self.W1.copy(), b1=self.b1.copy(), W2=self.W2.copy(), b2=self.b2.copy(),
        )

    def _inputs(self, inputs) -> np.ndarray:
        X = np.atleast_2d(np.asarray(inputs, dtype=float))
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise ValueError(f"Expected {self.n_inputs} context values per row, got shape {X.shape}")
        return X

    def _hidden(self, X: np.ndarray) -> np.ndarray:
        return expit(X @ self.W1.T + self.b1)

    def logits(self, inputs) -> np.ndarray:
        return self._hidden(self._inputs(inputs)) @ self.W2.T + self.b2

    def forward(self, inputs) -> np.ndarray:
        """
        Bin probabilities

        Args:
            inputs: Context rows of shape (n, d - 1), or a single row

        Returns:
            Array of shape (n, bins) whose rows sum to 1
        """
        return softmax(self.logits(inputs), axis=-1)

    def bin_index(self, values) -> np.ndarray:
        """Half-open bins [e_k, e_k+1), last bin closed; outside values clamp"""
        idx = np.floor((np.asarray(values, dtype=float) - self.lo) / self.width).astype(int)
        return np.clip(idx, 0, self.bins - 1)

    def loss(self, inputs, labels) -> float:
        """Mean negative log-probability of the labelled bins"""
        labels = np.asarray(labels, dtype=int)
        log_probs = log_softmax(self.logits(inputs), axis=-1)
        return float(-np.mean(log_probs[np.arange(labels.shape[0]), labels]))

    def loss_and_gradient(self, inputs, labels) -> Tuple[float, Dict[str, np.ndarray]]:
        """
        Mean cross-entropy and its exact gradient

        Args:
            inputs: Context rows of shape (n, d - 1)
            labels: Bin indices in [0, bins)

        Returns:
            Tuple (loss, gradients keyed by parameter name)
        """
        X = self._inputs(inputs)
        labels = np.asarray(labels, dtype=int)
        if np.any(labels < 0) or np.any(labels >= self.bins):
            raise ValueError(f"Labels must lie in [0, {self.bins})")
        n = labels.shape[0]

        hidden = self._hidden(X)
        logits = hidden @ self.W2.T + self.b2
        log_probs = log_softmax(logits, axis=-1)
        loss = float(-np.mean(log_probs[np.arange(n), labels]))

        d_logits = np.exp(log_probs)
        d_logits[np.arange(n), labels] -= 1.0
        d_logits /= n
        d_hidden = (d_logits @ self.W2) * hidden * (1.0 - hidden)

        grads = {
            "W1": d_hidden.T @ X,
            "b1": np.sum(d_hidden, axis=0),
            "W2": d_logits.T @ hidden,
            "b2": np.sum(d_logits, axis=0),
        }
        return loss, grads

    def apply_gradient(self, grads: Dict[str, np.ndarray], learning_rate: float) -> None:
        for name in PARAM_NAMES:
            setattr(self, name, getattr(self, name) - learning_rate * grads[name])

    def sample(self, inputs, size: int, rng: np.random.Generator) -> np.ndarray:
        """
        Draw bin midpoints from the predicted categorical distributions

        Returns:
            Array of shape (n, size)
        """
        probs = self.forward(inputs)
        cdf = np.cumsum(probs, axis=-1)
        u = rng.random((probs.shape[0], size))
        idx = np.sum(u[:, :, None] >= cdf[:, None, :], axis=-1)
        return self.midpoints[np.minimum(idx, self.bins - 1)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "j": self.j,
            "lo": self.lo,
            "hi": self.hi,
            "bins": self.bins,
            "hidden": self.hidden,
            "inputs": self.n_inputs,
            "W1": self.W1.tolist(),
            "b1": self.b1.tolist(),
            "W2": self.W2.tolist(),
            "b2": self.b2.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HistogramConditionalModel":
        try:
            hidden = int(data["hidden"])
            return cls(
                j=int(data["j"]),
                lo=float(data["lo"]),
                hi=float(data["hi"]),
                W1=np.asarray(data["W1"], dtype=float).reshape(hidden, int(data["inputs"])),
                b1=np.asarray(data["b1"], dtype=float),
                W2=np.asarray(data["W2"], dtype=float).reshape(int(data["bins"]), hidden),
                b2=np.asarray(data["b2"], dtype=float),
            )
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigurationError(f"Invalid conditional model record: {e}") from e

    def save(self, path: Path) -> None:
        """Write the model as a versioned TOML document"""
        _write_toml(path, {"format_version": FORMAT_VERSION, "model": self.to_dict()})

    @classmethod
    def load(cls, path: Path) -> "HistogramConditionalModel":
        return cls.from_dict(_read_toml(path)["model"])


def _write_toml(path: Path, data: Dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "wb") as f:
            tomli_w.dump(data, f)
        logger.info(f"Saved conditional models to {path}")
    except Exception as e:
        logger.error(f"Failed to save conditional models to {path}: {e}")
        raise


def _read_toml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        logger.error(f"Failed to load conditional models from {path}: {e}")
        raise ConfigurationError(f"Cannot read model file {path}: {e}") from e
    if data.get("format_version") != FORMAT_VERSION:
        raise ConfigurationError(
            f"Unsupported model format version {data.get('format_version')!r} in {path}"
        )
    return data


def mlp_forward(model: HistogramConditionalModel, x_minus_j) -> np.ndarray:
    """Bin probabilities for one context vector, shape (bins,)"""
    return model.forward(np.asarray(x_minus_j, dtype=float).reshape(1, -1))[0]


def train_step_gradient(model: HistogramConditionalModel, inputs, labels) -> Dict[str, np.ndarray]:
    """Gradient of the mean cross-entropy over a batch"""
    return model.loss_and_gradient(inputs, labels)[1]


def sample_conditional(model: HistogramConditionalModel, x_minus_j, rng: np.random.Generator) -> float:
    """One midpoint draw for one context vector"""
    return float(model.sample(np.asarray(x_minus_j, dtype=float).reshape(1, -1), 1, rng)[0, 0])


@dataclass
class TrainingRecord:
    """Selected model plus the validation-loss history it was chosen from"""
    model: HistogramConditionalModel
    best_epoch: int
    best_val_loss: float
    val_losses: List[float] = field(default_factory=list)


def _bin_interval(column: np.ndarray, margin: float) -> Tuple[float, float]:
    lo, hi = float(np.min(column)), float(np.max(column))
    spread = hi - lo
    if spread <= 0:
        logger.warning(f"Constant training column (value {lo}); using a unit-width interval")
        return lo - 0.5, hi + 0.5
    return lo - margin * spread, hi + margin * spread


def train_conditional(train, val, j: int, cfg: TrainConfig, rng: np.random.Generator) -> TrainingRecord:
    """
    Fit the bin classifier of coordinate j by full-batch gradient descent

    The validation loss is recorded before training and after every epoch;
    the snapshot with the lowest one is kept (earliest on ties).

    Raises:
        ConfigurationError: If either split is empty
        EstimationError: If the training loss becomes non-finite
    """
    train = np.asarray(train, dtype=float)
    val = np.asarray(val, dtype=float)
    if train.ndim != 2 or val.ndim != 2 or train.shape[0] == 0 or val.shape[0] == 0:
        raise ConfigurationError(f"Coordinate {j}: training and validation splits must be non-empty")

    lo, hi = _bin_interval(train[:, j], cfg.interval_margin)
    model = HistogramConditionalModel.initialize(j, train.shape[1] - 1, lo, hi, cfg.bins, cfg.hidden, rng)

    train_inputs = np.delete(train, j, axis=1)
    val_inputs = np.delete(val, j, axis=1)
    train_labels = model.bin_index(train[:, j])
    val_labels = model.bin_index(val[:, j])

    best = model.copy()
    best_epoch = 0
    best_loss = model.loss(val_inputs, val_labels)
    history = [best_loss]

    for epoch in range(1, cfg.epochs + 1):
        loss, grads = model.loss_and_gradient(train_inputs, train_labels)
        if not np.isfinite(loss):
            message = f"Training diverged for coordinate {j} at epoch {epoch} (loss {loss})"
            logger.error(message)
            raise EstimationError(message)
        model.apply_gradient(grads, cfg.learning_rate)

        val_loss = model.loss(val_inputs, val_labels)
        history.append(val_loss)
        if val_loss < best_loss:
            best, best_epoch, best_loss = model.copy(), epoch, val_loss

    logger.debug(f"Coordinate {j}: best validation loss {best_loss:.4f} at epoch {best_epoch}/{cfg.epochs}")
    return TrainingRecord(model=best, best_epoch=best_epoch, best_val_loss=best_loss, val_losses=history)


def fit_conditional(train, val, j: int, cfg: TrainConfig, rng: np.random.Generator) -> HistogramConditionalModel:
    """Fit coordinate j and return the lowest-validation-loss snapshot"""
    return train_conditional(train, val, j, cfg, rng).model


class FittedConditionals(ConditionalSampler):
    """One fitted bin classifier per coordinate, usable as a conditional sampler"""

    def __init__(self, models: List[HistogramConditionalModel], best_val_losses: Optional[List[float]] = None):
        for j, model in enumerate(models):
            if model.j != j:
                raise ConfigurationError(f"Model at position {j} is for coordinate {model.j}")
        self.models = list(models)
        self.best_val_losses = list(best_val_losses) if best_val_losses is not None else [float("nan")] * len(models)

    @property
    def dim(self) -> int:
        return len(self.models)

    def sample(self, j, data, n_y, rng):
        data = np.asarray(data, dtype=float)
        return self.models[j].sample(np.delete(data, j, axis=1), n_y, rng)

    def save(self, path: Path) -> None:
        _write_toml(path, {
            "format_version": FORMAT_VERSION,
            "best_val_losses": self.best_val_losses,
            "models": [m.to_dict() for m in self.models],
        })

    @classmethod
    def load(cls, path: Path) -> "FittedConditionals":
        data = _read_toml(path)
        models = [HistogramConditionalModel.from_dict(m) for m in data.get("models", [])]
        return cls(models, data.get("best_val_losses"))


def split_dataset(data, fractions: Tuple[float, float, float], rng: np.random.Generator):
    """
    Shuffle rows and split them into training, validation and test sets

    Returns:
        Tuple (train, val, test)

    Raises:
        ConfigurationError: If any split would be empty
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    if n_train < 1 or n_val < 1 or n - n_train - n_val < 1:
        raise ConfigurationError(
            f"{n} rows cannot be split {fractions} into non-empty training, validation and test sets"
        )
    shuffled = data[rng.permutation(n)]
    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]


def fit_conditionals(train, val, cfg: TrainConfig, rng: np.random.Generator, workers: int = 1) -> FittedConditionals:
    """Fit every coordinate, each from its own substream of rng"""
    train = np.asarray(train, dtype=float)
    d = train.shape[1]
    streams = rng.spawn(d)
    records = run_parallel(
        lambda j: train_conditional(train, val, j, cfg, streams[j]),
        range(d),
        workers=workers,
    )
    losses = [r.best_val_loss for r in records]
    logger.debug(f"Fitted {d} conditional models, mean best validation loss {np.mean(losses):.4f}")
    return FittedConditionals([r.model for r in records], losses)


def fit_and_hold_out(data, cfg: TrainConfig, rng: np.random.Generator,
                     workers: int = 1) -> Tuple[np.ndarray, FittedConditionals]:
    """
    Split the data, fit conditionals on the training and validation rows

    Returns:
        Tuple (test rows, fitted conditionals)
    """
    split_rng, fit_rng = rng.spawn(2)
    train, val, test = split_dataset(data, cfg.fractions, split_rng)
    return test, fit_conditionals(train, val, cfg, fit_rng, workers)


def estimate_approx_kccsd(
    data,
    target: Target,
    cfg: TrainConfig,
    kernel: Kernel,
    n_y: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> DiscrepancyEstimate:
    """
    Estimate KCC-SD with learned conditionals

    Conditionals are fitted on the training and validation splits and the
    estimate is computed on the test rows only.
    """
    hold_rng, estimate_rng = rng.spawn(2)
    test, fitted = fit_and_hold_out(data, cfg, hold_rng, workers)
    return estimate_kccsd(test, target, fitted, kernel, n_y, estimate_rng, workers)
