"""
Tests for the histogram conditional models and approximate KCC-SD
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats
from scipy.special import expit

from steincc.config import TrainConfig
from steincc.cond_model import (
    FittedConditionals,
    HistogramConditionalModel,
    estimate_approx_kccsd,
    fit_and_hold_out,
    fit_conditional,
    fit_conditionals,
    mlp_forward,
    sample_conditional,
    split_dataset,
    train_conditional,
    train_step_gradient,
)
from steincc.errors import ConfigurationError
from steincc.gof import compute_h
from steincc.kernels import RBFKernel
from steincc.targets import CorrelatedGaussian


def _model(rng, n_inputs=3, hidden=4, bins=5, lo=-2.0, hi=2.0):
    return HistogramConditionalModel.initialize(0, n_inputs, lo, hi, bins, hidden, rng)


def _zero_model(n_inputs=2, hidden=3, bins=4, b2=None):
    return HistogramConditionalModel(
        j=0, lo=0.0, hi=1.0,
        W1=np.zeros((hidden, n_inputs)), b1=np.zeros(hidden),
        W2=np.zeros((bins, hidden)), b2=np.zeros(bins) if b2 is None else np.asarray(b2, dtype=float),
    )


def test_zero_weights_give_uniform_probabilities():
    """Test uniform output from an all-zero network"""
    probs = mlp_forward(_zero_model(bins=4), np.array([0.3, -2.0]))
    assert_allclose(probs, np.full(4, 0.25))


def test_forward_outputs_probability_vectors(rng):
    """Test that every output row is a probability vector"""
    model = _model(rng)
    probs = model.forward(rng.normal(size=(20, 3)) * 5)
    assert probs.shape == (20, 5)
    assert np.all(probs > 0) and np.all(probs < 1)
    assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_two_bin_softmax_is_logistic():
    """Test the two-bin softmax against the logistic function"""
    t = 0.8
    probs = mlp_forward(_zero_model(bins=2, b2=[t, -t]), np.zeros(2))
    assert_allclose(probs, [expit(2 * t), 1 - expit(2 * t)], rtol=1e-12)


def test_gradient_matches_finite_differences(rng):
    """Test backpropagation against central differences"""
    model = _model(rng)
    model.b1 = rng.normal(size=model.hidden)
    model.b2 = rng.normal(size=model.bins)
    inputs = rng.normal(size=(3, 3))
    labels = np.array([0, 3, 4])
    grads = train_step_gradient(model, inputs, labels)

    eps = 1e-6
    for name in ("W1", "b1", "W2", "b2"):
        param = getattr(model, name)
        numeric = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            original = param[idx]
            param[idx] = original + eps
            plus = model.loss(inputs, labels)
            param[idx] = original - eps
            minus = model.loss(inputs, labels)
            param[idx] = original
            numeric[idx] = (plus - minus) / (2 * eps)
        assert_allclose(grads[name], numeric, rtol=1e-4, atol=1e-9, err_msg=name)


def test_gradient_vanishes_for_confident_correct_prediction():
    """Test zero loss and gradient for a saturated correct prediction"""
    model = _zero_model(bins=3, b2=[50.0, 0.0, 0.0])
    loss, grads = model.loss_and_gradient(np.zeros((4, 2)), np.zeros(4, dtype=int))
    assert loss < 1e-15
    assert max(np.max(np.abs(g)) for g in grads.values()) < 1e-15


def test_duplicating_rows_keeps_the_mean_gradient(rng):
    """Test that the gradient is a mean over rows"""
    model = _model(rng)
    inputs = rng.normal(size=(4, 3))
    labels = np.array([1, 2, 2, 0])
    once = train_step_gradient(model, inputs, labels)
    twice = train_step_gradient(model, np.vstack([inputs, inputs]), np.concatenate([labels, labels]))
    for name in once:
        assert_allclose(twice[name], once[name], rtol=1e-12, atol=1e-15)


def test_bin_index_boundaries():
    """Test half-open bins, the closed last bin and clamping"""
    model = _zero_model(bins=4)
    assert_array_equal(model.bin_index([0.0, 0.25, 0.49, 1.0, -5.0, 5.0]), [0, 1, 1, 3, 0, 3])
    assert_allclose(model.edges, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert_allclose(model.midpoints, [0.125, 0.375, 0.625, 0.875])


def test_single_bin_always_returns_the_interval_midpoint(rng):
    """Test sampling with one bin"""
    model = HistogramConditionalModel.initialize(0, 2, -1.0, 3.0, 1, 4, rng)
    assert sample_conditional(model, np.array([0.1, 0.2]), rng) == pytest.approx(1.0)


def test_degenerate_output_returns_first_midpoint(rng):
    """Test sampling from a one-hot output"""
    model = _zero_model(bins=4, b2=[1000.0, 0.0, 0.0, 0.0])
    draws = model.sample(np.zeros((3, 2)), 50, rng)
    assert_array_equal(draws, np.full((3, 50), 0.125))


def test_sampled_bin_frequencies_match_probabilities(rng):
    """Test sampled bin frequencies against the predicted probabilities"""
    model = _model(rng)
    model.b2 = np.array([0.5, -0.3, 1.0, 0.0, -1.0])
    context = rng.normal(size=(1, 3))
    probs = model.forward(context)[0]
    n = 100000
    draws = model.sample(context, n, rng)[0]
    counts = np.array([np.sum(np.isclose(draws, m)) for m in model.midpoints])
    freq = counts / n
    assert counts.sum() == n
    assert np.all(np.abs(freq - probs) <= 4 * np.sqrt(probs * (1 - probs) / n))
    assert stats.chisquare(counts, probs * n).pvalue > 1e-4


def test_fit_selects_the_best_validation_snapshot(rng):
    """Test that the returned model has the lowest validation loss seen"""
    g = CorrelatedGaussian.equicorrelated(3, 0.7)
    train, val = g.sample(200, rng), g.sample(100, rng)
    record = train_conditional(train, val, 1, TrainConfig(epochs=50), rng)
    assert len(record.val_losses) == 51
    assert record.best_val_loss <= record.val_losses[0]
    assert record.best_val_loss == min(record.val_losses)
    assert record.model.loss(np.delete(val, 1, axis=1), record.model.bin_index(val[:, 1])) == pytest.approx(
        record.best_val_loss, rel=1e-12
    )


def test_interval_covers_training_range_with_margin(rng):
    """Test the bin interval rule and the default architecture"""
    train = np.column_stack([rng.normal(size=50), np.linspace(-1.0, 3.0, 50)])
    model = fit_conditional(train, train[:10], 1, TrainConfig(epochs=1), rng)
    assert model.lo == pytest.approx(-1.2)
    assert model.hi == pytest.approx(3.2)
    assert model.bins == 20 and model.hidden == 15


def test_fit_is_deterministic():
    """Test that the same seed gives the same weights"""
    data = CorrelatedGaussian.equicorrelated(3, 0.5).sample(150, np.random.default_rng(0))
    a = fit_conditional(data[:100], data[100:], 2, TrainConfig(epochs=20), np.random.default_rng(3))
    b = fit_conditional(data[:100], data[100:], 2, TrainConfig(epochs=20), np.random.default_rng(3))
    for name in ("W1", "b1", "W2", "b2"):
        assert_array_equal(getattr(a, name), getattr(b, name))


def test_learns_a_sign_relation(rng):
    """Test that training learns a simple deterministic conditional"""
    def draw(n):
        x0 = rng.uniform(-2, 2, size=n)
        return np.column_stack([x0, np.sign(x0)])

    train, val = draw(400), draw(400)
    model = fit_conditional(train, val, 1, TrainConfig(epochs=2000, learning_rate=1.0, bins=2), rng)
    predicted = np.argmax(model.forward(val[:, :1]), axis=1)
    accuracy = np.mean(predicted == model.bin_index(val[:, 1]))
    assert accuracy >= 0.95


def test_empty_split_is_rejected(rng):
    """Test error on an empty training split"""
    with pytest.raises(ConfigurationError):
        fit_conditional(np.zeros((0, 2)), np.zeros((5, 2)), 0, TrainConfig(), rng)


def test_split_dataset(rng):
    """Test split sizes and that the splits partition the rows"""
    data = np.arange(200, dtype=float).reshape(100, 2)
    train, val, test = split_dataset(data, (0.2, 0.1, 0.7), rng)
    assert (len(train), len(val), len(test)) == (20, 10, 70)
    assert sorted(np.concatenate([train, val, test])[:, 0].tolist()) == data[:, 0].tolist()
    with pytest.raises(ConfigurationError):
        split_dataset(data[:4], (0.2, 0.1, 0.7), rng)


def test_fitted_conditionals_sample_shape(rng):
    """Test sampling shapes from fitted conditionals"""
    g = CorrelatedGaussian.equicorrelated(3, 0.5)
    fitted = fit_conditionals(g.sample(60, rng), g.sample(30, rng), TrainConfig(epochs=5), rng)
    assert fitted.dim == 3
    assert len(fitted.best_val_losses) == 3
    draws = fitted.sample(2, g.sample(7, rng), 4, rng)
    assert draws.shape == (7, 4)
    assert np.all(np.isin(draws, fitted.models[2].midpoints))


def test_model_persistence(tmp_path, rng):
    """Test saving and loading fitted models"""
    g = CorrelatedGaussian.equicorrelated(2, 0.5)
    fitted = fit_conditionals(g.sample(40, rng), g.sample(20, rng), TrainConfig(epochs=3, bins=6), rng)
    path = tmp_path / "models.toml"
    fitted.save(path)
    loaded = FittedConditionals.load(path)
    for original, restored in zip(fitted.models, loaded.models):
        assert (restored.j, restored.lo, restored.hi) == (original.j, original.lo, original.hi)
        for name in ("W1", "b1", "W2", "b2"):
            assert_array_equal(getattr(restored, name), getattr(original, name))

    single = tmp_path / "one.toml"
    fitted.models[1].save(single)
    assert_array_equal(HistogramConditionalModel.load(single).W2, fitted.models[1].W2)


def test_model_file_version_is_checked(tmp_path):
    """Test rejection of an unknown model file version"""
    path = tmp_path / "bad.toml"
    path.write_text("format_version = 99\n")
    with pytest.raises(ConfigurationError):
        FittedConditionals.load(path)


def test_untrained_model_keeps_the_null_at_zero(rng):
    """Test that any held-out model keeps the null statistic centred"""
    g = CorrelatedGaussian.standard(5)
    data = g.sample(2000, rng)
    test_rows, fitted = fit_and_hold_out(data, TrainConfig(epochs=0), rng)
    h = compute_h(test_rows, g, fitted, RBFKernel(1.0), 5, rng)
    assert abs(h.statistic) <= 3 * h.standard_error


def test_approximate_estimate_uses_only_test_rows(rng):
    """Test that only the test split enters the estimate"""
    g = CorrelatedGaussian.standard(2)
    estimate = estimate_approx_kccsd(g.sample(100, rng), g, TrainConfig(epochs=2), RBFKernel(), 3, rng)
    assert estimate.n == 70
    assert estimate.weights.shape == (2,)


def test_approximate_estimate_needs_enough_rows(rng):
    """Test error when the splits would be empty"""
    g = CorrelatedGaussian.standard(2)
    with pytest.raises(ConfigurationError):
        estimate_approx_kccsd(g.sample(3, rng), g, TrainConfig(epochs=1), RBFKernel(), 3, rng)
