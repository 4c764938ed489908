"""
Unit tests for experiment configuration
"""

import unittest
import tempfile
import shutil
from pathlib import Path
from unittest.mock import patch

from steincc.config import (
    EXPERIMENT_DEFAULTS,
    ExperimentSpec,
    MwgConfig,
    TrainConfig,
    env_overrides,
)
from steincc.errors import ConfigurationError


class TestExperimentSpec(unittest.TestCase):
    """Test ExperimentSpec defaults, validation and persistence"""

    def setUp(self):
        """Set up a scratch directory"""
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up the scratch directory"""
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_experiment_defaults_fill_unset_fields(self):
        """Test that unset lists come from the experiment's defaults"""
        spec = ExperimentSpec(experiment="null-calibration")

        self.assertEqual(spec.method, "kccsd-exact")
        self.assertEqual(spec.dims, EXPERIMENT_DEFAULTS["null-calibration"]["dims"])
        self.assertEqual(spec.n_reps, 200)
        self.assertEqual(spec.iterations, 60000)
        self.assertEqual(spec.burn_in, 50000)

    def test_laplace_noise_defaults_use_coarse_bins(self):
        """Test the Laplace-noise bin count and auxiliary draws against the shared ones"""
        noise = ExperimentSpec(experiment="laplace-noise-power")
        other = ExperimentSpec(experiment="power-vs-dim")

        self.assertEqual((noise.bins, noise.n_y), (8, 50))
        self.assertEqual((other.bins, other.n_y), (20, 5))
        self.assertEqual(noise.train_config().bins, 8)

        explicit = ExperimentSpec(experiment="laplace-noise-power", bins=20, n_y=5)
        self.assertEqual((explicit.bins, explicit.n_y), (20, 5))

    def test_threads_default_to_cpu_count(self):
        """Test that the worker count follows the machine"""
        with patch("steincc.config.os.cpu_count", return_value=6):
            self.assertEqual(ExperimentSpec().threads, 6)
        with patch("steincc.config.os.cpu_count", return_value=None):
            self.assertEqual(ExperimentSpec().threads, 1)
        self.assertEqual(ExperimentSpec(threads=3).threads, 3)

    def test_explicit_values_win_over_defaults(self):
        """Test that given values are kept"""
        spec = ExperimentSpec(experiment="power-vs-dim", method="ksd", dims=[2], n_reps=3)

        self.assertEqual(spec.method, "ksd")
        self.assertEqual(spec.dims, [2])
        self.assertEqual(spec.n_reps, 3)

    def test_defaults_are_not_shared(self):
        """Test that default lists are copied per spec"""
        spec = ExperimentSpec(experiment="power-vs-dim")
        spec.dims.append(99)

        self.assertNotIn(99, EXPERIMENT_DEFAULTS["power-vs-dim"]["dims"])

    def test_validation_errors(self):
        """Test rejection of out-of-range settings"""
        bad = [
            dict(experiment="unknown"),
            dict(method="mmd"),
            dict(kernel="laplace"),
            dict(dims=[]),
            dict(dims=[0]),
            dict(ns=[1]),
            dict(alpha=0.0),
            dict(alpha=1.0),
            dict(n_reps=0),
            dict(bootstrap_l=0),
            dict(threads=0),
            dict(bandwidth=-1.0),
            dict(biases=[-0.1]),
            dict(experiment="laplace-noise-power", method="kccsd-exact"),
            dict(experiment="mwg-bias", method="ksd"),
            dict(experiment="discrepancy-vs-n", method="ksd"),
        ]
        for kwargs in bad:
            with self.subTest(**kwargs):
                with self.assertRaises(ConfigurationError):
                    ExperimentSpec(**kwargs)

    def test_configuration_error_is_a_value_error(self):
        """Test that callers catching ValueError also catch config errors"""
        with self.assertRaises(ValueError):
            ExperimentSpec(alpha=2.0)

    def test_derived_configs(self):
        """Test building training and chain settings"""
        spec = ExperimentSpec(experiment="mwg-bias", bins=8, epochs=7, iterations=40, burn_in=20, thin=5)

        train = spec.train_config()
        self.assertEqual((train.bins, train.epochs, train.hidden), (8, 7, 15))

        chain = spec.mwg_config(0.2)
        self.assertEqual(chain.bias, 0.2)
        self.assertEqual(chain.retained, 20)
        self.assertEqual(chain.thin, 5)

    def test_save_and_load(self):
        """Test that a saved spec loads back unchanged"""
        spec = ExperimentSpec(experiment="discrepancy-vs-n", ns=[50, 100], bandwidth=0.5, seed=9)
        path = Path(self.test_dir) / "nested" / "spec.toml"

        spec.save(path)
        loaded = ExperimentSpec.load(path)

        self.assertEqual(loaded, spec)

    def test_load_with_overrides(self):
        """Test that overrides take precedence over the file"""
        path = Path(self.test_dir) / "spec.toml"
        path.write_text('experiment = "power-vs-n"\nn_reps = 4\nseed = 1\n')

        spec = ExperimentSpec.load(path, seed=5, alpha=None)

        self.assertEqual(spec.experiment, "power-vs-n")
        self.assertEqual(spec.n_reps, 4)
        self.assertEqual(spec.seed, 5)
        self.assertEqual(spec.alpha, 0.05)

    def test_load_rejects_unknown_keys(self):
        """Test that typos in the file are reported"""
        path = Path(self.test_dir) / "spec.toml"
        path.write_text("n_repz = 4\n")

        with self.assertRaises(ConfigurationError):
            ExperimentSpec.load(path)

    def test_load_missing_or_malformed_file(self):
        """Test error on unreadable files"""
        with self.assertRaises(ConfigurationError):
            ExperimentSpec.load(Path(self.test_dir) / "missing.toml")

        path = Path(self.test_dir) / "broken.toml"
        path.write_text("seed = = 3\n")
        with self.assertRaises(ConfigurationError):
            ExperimentSpec.load(path)


class TestEnvironment(unittest.TestCase):
    """Test STEINCC_ environment overrides"""

    def test_env_values_are_parsed(self):
        """Test parsing of every field kind"""
        environ = {
            "STEINCC_EXPERIMENT": "power-vs-n",
            "STEINCC_NS": "100, 200",
            "STEINCC_BIASES": "0,0.25",
            "STEINCC_ALPHA": "0.1",
            "STEINCC_N_REPS": "12",
            "STEINCC_RECORD_TIME": "false",
            "STEINCC_BANDWIDTH": "2.5",
            "UNRELATED": "x",
        }

        values = env_overrides(environ)

        self.assertEqual(values["experiment"], "power-vs-n")
        self.assertEqual(values["ns"], [100, 200])
        self.assertEqual(values["biases"], [0.0, 0.25])
        self.assertEqual(values["alpha"], 0.1)
        self.assertEqual(values["n_reps"], 12)
        self.assertIs(values["record_time"], False)
        self.assertEqual(values["bandwidth"], 2.5)
        self.assertEqual(len(values), 7)

    def test_from_env_with_overrides(self):
        """Test that keyword overrides beat the environment"""
        spec = ExperimentSpec.from_env({"STEINCC_SEED": "3", "STEINCC_N_Y": "2"}, seed=8)

        self.assertEqual(spec.seed, 8)
        self.assertEqual(spec.n_y, 2)

    def test_invalid_env_value(self):
        """Test that unparsable numbers raise ConfigurationError"""
        with self.assertRaises(ConfigurationError):
            env_overrides({"STEINCC_N_REPS": "many"})


class TestComponentConfigs(unittest.TestCase):
    """Test TrainConfig and MwgConfig validation"""

    def test_train_config_defaults(self):
        """Test the documented training defaults"""
        cfg = TrainConfig()

        self.assertEqual(cfg.epochs, 500)
        self.assertEqual(cfg.learning_rate, 0.1)
        self.assertEqual(cfg.bins, 20)
        self.assertEqual(cfg.hidden, 15)
        self.assertEqual(cfg.fractions, (0.2, 0.1, 0.7))
        self.assertEqual(cfg.interval_margin, 0.05)

    def test_train_config_errors(self):
        """Test rejection of invalid training settings"""
        for kwargs in (dict(epochs=-1), dict(learning_rate=0.0), dict(bins=0), dict(hidden=0),
                       dict(fractions=(0.5, 0.5, 0.0)), dict(fractions=(0.3, 0.3, 0.3))):
            with self.subTest(**kwargs):
                with self.assertRaises(ConfigurationError):
                    TrainConfig(**kwargs)

    def test_mwg_config_defaults(self):
        """Test the documented chain defaults"""
        cfg = MwgConfig()

        self.assertEqual(cfg.proposal_std, 0.5)
        self.assertEqual(cfg.thin, 10)
        self.assertEqual(cfg.retained, 10000)


if __name__ == "__main__":
    unittest.main()
