"""
Tests for the wild-bootstrap tests and the power harness
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from steincc.config import TrainConfig
from steincc.errors import ConfigurationError
from steincc.gof import (
    TestScenario,
    compute_h,
    decide,
    empirical_quantile,
    estimate_power,
    gof_test,
    ksd_gof_test,
    rademacher,
    run_repetitions,
    wild_bootstrap,
)
from steincc.kernels import RBFKernel
from steincc.models import GofResult, HValues
from steincc.stein import estimate_kccsd, ksd_stein_gram
from steincc.targets import CorrelatedGaussian, GaussianConditionals, LaplaceProduct, ProductConditionals


class _FixedOutcome:
    """Scenario stub returning the same p-value every time"""

    def __init__(self, p_value):
        self.p_value = p_value

    def run(self, n, alpha, L, rng):
        return GofResult(statistic=0.0, replicates=np.zeros(L), p_value=self.p_value,
                         reject=self.p_value < alpha, alpha=alpha, threshold=0.0)


def test_rademacher_values(rng):
    """Test that signs are plus or minus one"""
    eps = rademacher((50, 40), rng)
    assert set(np.unique(eps)) == {-1.0, 1.0}
    assert abs(eps.mean()) < 0.1


def test_all_positive_signs_reproduce_the_statistic(rng):
    """Test that all-positive signs give the statistic back"""
    h = HValues(rng.normal(size=37))
    replicates = wild_bootstrap(h, 3, rng, signs=np.ones((3, 37)))
    assert_allclose(replicates, h.statistic, rtol=1e-14)

    flipped = wild_bootstrap(h, 2, rng, signs=-np.ones((2, 37)))
    assert_allclose(flipped, -h.statistic, rtol=1e-14)


def test_bootstrap_replicates_are_centred(rng):
    """Test that bootstrap replicates average near zero"""
    h = HValues(rng.normal(loc=2.0, size=200))
    replicates = wild_bootstrap(h, 2000, rng)
    assert replicates.shape == (2000,)
    # each replicate has standard deviation sqrt(mean(h^2) / n)
    scale = np.sqrt(np.mean(h.values ** 2) / 200)
    assert abs(replicates.mean()) < 4 * scale / np.sqrt(2000)
    assert replicates.std() == pytest.approx(scale, rel=0.1)


def test_bootstrap_rejects_nonpositive_L(rng):
    """Test error on a non-positive replicate count"""
    with pytest.raises(ConfigurationError):
        wild_bootstrap(HValues(np.ones(3)), 0, rng)


def test_quantile_and_decision_example():
    """Test a worked quantile and decision"""
    result = decide(1.5, [2.0, -1.0, 1.0, 0.0], alpha=0.25)
    assert result.threshold == 2.0
    assert result.p_value == pytest.approx(0.25)
    assert not result.reject


def test_empirical_quantile_index():
    """Test the quantile index rule"""
    replicates = np.arange(100, dtype=float)
    assert empirical_quantile(replicates, 0.05) == 95.0
    assert empirical_quantile(replicates, 0.5) == 50.0
    # tiny alpha caps at the maximum
    assert empirical_quantile(replicates, 1e-6) == 99.0


def test_decision_extremes():
    """Test decisions for statistics below and above every replicate"""
    replicates = np.linspace(-1, 1, 50)
    high = decide(10.0, replicates, 0.05)
    assert high.p_value == 0.0 and high.reject
    low = decide(-10.0, replicates, 0.05)
    assert low.p_value == 1.0 and not low.reject
    with pytest.raises(ConfigurationError):
        decide(0.0, replicates, 1.0)


def test_rejection_implies_small_p_value(rng):
    """Test that a rejection comes with p at most alpha"""
    for _ in range(200):
        L = int(rng.integers(5, 60))
        replicates = rng.normal(size=L)
        alpha = float(rng.uniform(0.01, 0.5))
        result = decide(float(rng.normal(scale=2)), replicates, alpha)
        if result.reject:
            assert result.p_value <= alpha + 1.0 / L


def test_decision_is_scale_invariant(rng):
    """Test that scaling statistic and replicates keeps the decision"""
    h = HValues(rng.normal(loc=0.1, size=80))
    signs = rademacher((300, 80), rng)
    base = decide(h.statistic, wild_bootstrap(h, 300, rng, signs=signs), 0.05)
    scaled_h = HValues(h.values * 7.5)
    scaled = decide(scaled_h.statistic, wild_bootstrap(scaled_h, 300, rng, signs=signs), 0.05)
    assert scaled.p_value == base.p_value
    assert scaled.reject == base.reject


def test_h_mean_matches_the_estimate():
    """Test that the mean of h equals the KCC-SD estimate"""
    g = CorrelatedGaussian.equicorrelated(3, 0.5)
    data = g.sample(60, np.random.default_rng(1))
    sampler = GaussianConditionals(g)
    h = compute_h(data, g, sampler, RBFKernel(), 4, np.random.default_rng(2))
    estimate = estimate_kccsd(data, g, sampler, RBFKernel(), 4, np.random.default_rng(2))
    assert len(h) == 60
    assert h.statistic == pytest.approx(estimate.total, rel=1e-12, abs=1e-15)


def test_gof_test_is_deterministic():
    """Test that the same seed gives the same test result"""
    g = CorrelatedGaussian.standard(2)
    data = g.sample(50, np.random.default_rng(0))
    a = gof_test(data, g, GaussianConditionals(g), RBFKernel(), 3, 100, 0.05, np.random.default_rng(4))
    b = gof_test(data, g, GaussianConditionals(g), RBFKernel(), 3, 100, 0.05, np.random.default_rng(4))
    assert a.statistic == b.statistic
    assert_array_equal(a.replicates, b.replicates)
    assert a.replicates.shape == (100,)


def test_ksd_positive_signs_reproduce_the_statistic(rng):
    """Test the KSD statistic with all-positive signs"""
    g = CorrelatedGaussian.standard(2)
    data = rng.normal(size=(30, 2))
    kernel = RBFKernel(1.0, dim=2)
    result = ksd_gof_test(data, g, kernel, 2, 0.05, rng, signs=np.ones((2, 30)))
    assert_allclose(result.replicates, result.statistic, rtol=1e-12)
    gram, _ = ksd_stein_gram(data, g, kernel)
    assert result.statistic == pytest.approx(np.sum(gram) / 30, rel=1e-12)


def test_ksd_test_needs_two_rows(rng):
    """Test error on a single-row KSD test"""
    g = CorrelatedGaussian.standard(2)
    with pytest.raises(ConfigurationError):
        ksd_gof_test(np.zeros((1, 2)), g, RBFKernel(1.0, dim=2), 10, 0.05, rng)


def test_ksd_test_holds_its_level_under_the_null():
    """Test that KSD rejects a true standard normal at roughly the nominal rate"""
    g = CorrelatedGaussian.standard(5)
    scenario = TestScenario(g, g, method="ksd")
    results = run_repetitions(scenario, 500, 200, 0.05, 500, np.random.default_rng(41))
    rejection_rate = np.mean([r.reject for r in results])
    assert 0.01 <= rejection_rate <= 0.10


def test_power_of_stub_scenarios(rng):
    """Test power counting with fixed p-values"""
    assert estimate_power(_FixedOutcome(0.0), 10, 7, 0.05, 20, rng) == 1.0
    assert estimate_power(_FixedOutcome(1.0), 10, 7, 0.05, 20, rng) == 0.0
    # p equal to alpha does not count as a rejection
    assert estimate_power(_FixedOutcome(0.05), 10, 3, 0.05, 20, rng) == 0.0


def test_repetitions_do_not_depend_on_worker_count():
    """Test that repetitions give the same results on a thread pool"""
    g = CorrelatedGaussian.standard(2)
    scenario = TestScenario(g, g, sampler=GaussianConditionals(g))
    serial = run_repetitions(scenario, 30, 4, 0.05, 50, np.random.default_rng(8))
    threaded = run_repetitions(scenario, 30, 4, 0.05, 50, np.random.default_rng(8), workers=3)
    assert [r.statistic for r in serial] == [r.statistic for r in threaded]
    assert [r.p_value for r in serial] == [r.p_value for r in threaded]


def test_scenario_validation():
    """Test rejection of inconsistent scenarios"""
    g = CorrelatedGaussian.standard(2)
    with pytest.raises(ConfigurationError):
        TestScenario(g, g, method="kccsd-exact")
    with pytest.raises(ConfigurationError):
        TestScenario(g, g, method="mmd")
    with pytest.raises(ConfigurationError):
        TestScenario(g, CorrelatedGaussian.standard(3), method="ksd")
    assert TestScenario(g, g, method="kccsd-approx").train_config == TrainConfig()


def test_scenario_kernels(rng):
    """Test kernel choice per method"""
    g = CorrelatedGaussian.standard(3)
    data = g.sample(40, rng)
    ksd = TestScenario(g, g, method="ksd").kernel_for(data)
    assert ksd.dim == 3
    cc = TestScenario(g, g, sampler=GaussianConditionals(g), bandwidth=2.0).kernel_for(data)
    assert cc.is_univariate and cc.sigma == 2.0


@pytest.mark.parametrize("method", ["ksd", "kccsd-approx"])
def test_scenario_methods_run(method, rng):
    """Test that each method runs end to end"""
    g = CorrelatedGaussian.standard(2)
    scenario = TestScenario(g, g, method=method, train_config=TrainConfig(epochs=3))
    result = scenario.run(60, 0.05, 40, rng)
    assert 0.0 <= result.p_value <= 1.0
    assert result.replicates.shape == (40,)
    assert result.seconds >= 0.0


@pytest.mark.slow
def test_null_rejection_rate_is_calibrated():
    """Test the exact-conditional rejection rate under the null"""
    g = CorrelatedGaussian.equicorrelated(3, 0.5)
    scenario = TestScenario(g, g, sampler=GaussianConditionals(g))
    power = estimate_power(scenario, 200, 100, 0.05, 200, np.random.default_rng(11))
    assert power <= 0.12


@pytest.mark.slow
def test_gaussian_target_rejects_laplace_data():
    """Test power against Laplace data at d = 5"""
    g = CorrelatedGaussian.standard(5)
    laplace = LaplaceProduct(5)
    scenario = TestScenario(g, laplace, sampler=ProductConditionals(laplace))
    power = estimate_power(scenario, 1000, 20, 0.05, 200, np.random.default_rng(12))
    assert power >= 0.5
