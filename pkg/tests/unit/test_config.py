# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import tempfile
import unittest
from pathlib import Path

import hcl
import numpy as np
from config import (
    ConfigError,
    ExperimentKind,
    config_content_matches,
    config_from_hcl,
    default_config,
    load_config,
    parse_config,
    render_config,
)
from specdens.v0.kernels import KernelFamily
from specdens.v0.models import RhoFamily, Structure

SIGMA0_CSV = "tests/unit/sigma0_coupled.csv"


class TestLoadConfig(unittest.TestCase):
    def test_given_shipped_defaults_when_loaded_then_kind_matches_file(self):
        for kind in ExperimentKind:
            self.assertEqual(default_config(kind).kind, kind)

    def test_given_small_rates_file_when_loaded_then_sections_merged(self):
        cfg = load_config(Path("tests/unit/rates_small.hcl"))

        self.assertEqual(cfg.kind, ExperimentKind.RATES)
        self.assertEqual(cfg.master_seed, 7)
        self.assertEqual(cfg.sizes, [32, 64, 128, 256])
        self.assertEqual(cfg.model.family, RhoFamily.EXPONENTIAL)
        self.assertEqual(cfg.model.variances, [1.0, 0.5])
        self.assertEqual(cfg.kernel.family, KernelFamily.TRAPEZOID_FLAT_TOP)
        self.assertEqual(cfg.output.theta_points, 9)
        self.assertFalse(cfg.output.plots)

    def test_given_missing_file_when_loaded_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            load_config(Path("tests/unit/no_such_file.hcl"))

    def test_given_malformed_file_when_loaded_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            load_config(Path("tests/unit/malformed.hcl"))

    def test_given_unknown_section_when_loaded_then_config_error_raised(self):
        with self.assertRaises(ConfigError) as context:
            load_config(Path("tests/unit/unknown_section.hcl"))

        self.assertIn("storage", str(context.exception))

    def test_given_no_experiment_section_when_parsed_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            config_from_hcl({"model": {"p": 2}})


class TestValidation(unittest.TestCase):
    def test_given_three_sizes_when_rates_parsed_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            parse_config({"kind": "rates", "sizes": [16, 32, 64]})

    def test_given_three_sizes_when_estimate_parsed_then_accepted(self):
        cfg = parse_config({"kind": "estimate", "sizes": [16, 32, 64]})

        self.assertEqual(cfg.sizes, [16, 32, 64])

    def test_given_two_bias_bandwidths_when_parsed_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            parse_config({"kind": "rates", "bias_bandwidths": [8, 16]})

    def test_given_three_alpha_grid_values_when_parsed_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            parse_config({"kind": "mixed-domain", "alpha_grid": [0.1, 0.2, 0.3]})

    def test_given_alpha_grid_value_outside_unit_interval_when_parsed_then_config_error_raised(
        self,
    ):
        with self.assertRaises(ConfigError):
            parse_config({"kind": "mixed-domain", "alpha_grid": [0.1, 0.2, 0.3, 1.0]})

    def test_given_planar_model_when_clt_parsed_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            parse_config({"kind": "clt", "model": {"d": 2}})

    def test_given_variances_of_wrong_length_when_parsed_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            parse_config({"kind": "simulate", "model": {"p": 2, "variances": [1.0]}})

    def test_given_negative_variance_when_parsed_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            parse_config({"kind": "simulate", "model": {"p": 2, "variances": [1.0, -0.5]}})

    def test_given_single_replicate_when_parsed_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            parse_config({"kind": "rates", "replicates": 1})

    def test_given_unknown_kind_when_parsed_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            parse_config({"kind": "bootstrap"})


class TestOverrides(unittest.TestCase):
    def setUp(self):
        self.cfg = load_config(Path("tests/unit/rates_small.hcl"))

    def test_given_seed_and_out_dir_when_overridden_then_both_applied(self):
        cfg = self.cfg.with_overrides(master_seed=11, out_dir="elsewhere")

        self.assertEqual(cfg.master_seed, 11)
        self.assertEqual(cfg.output.out_dir, "elsewhere")
        self.assertEqual(self.cfg.master_seed, 7)

    def test_given_none_overrides_when_applied_then_unchanged(self):
        self.assertEqual(self.cfg.with_overrides(master_seed=None, bandwidth=None), self.cfg)

    def test_given_kernel_overrides_when_applied_then_routed_to_kernel_block(self):
        cfg = self.cfg.with_overrides(kernel_family=KernelFamily.TRUNCATED_POWER, lam=3)

        self.assertEqual(cfg.kernel.family, KernelFamily.TRUNCATED_POWER)
        self.assertEqual(cfg.kernel.lam, 3)

    def test_given_invalid_override_when_applied_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            self.cfg.with_overrides(replicates=1)


class TestModelConstruction(unittest.TestCase):
    def test_given_variances_when_separable_model_built_then_lag_zero_is_diagonal(self):
        cfg = load_config(Path("tests/unit/rates_small.hcl"))

        model = cfg.covariance_model()

        self.assertEqual(model.p, 2)
        self.assertTrue(model.is_real)
        np.testing.assert_allclose(model.cov_array(np.zeros((1, 1)))[0], np.diag([1.0, 0.5]))

    def test_given_diagonal_structure_when_model_built_then_structure_kept(self):
        cfg = parse_config(
            {"kind": "simulate", "model": {"p": 3, "structure": "diagonal", "family": "gaussian"}}
        )

        model = cfg.covariance_model()

        self.assertEqual(model.structure, Structure.DIAGONAL)
        np.testing.assert_allclose(model.cov_array(np.zeros((1, 1)))[0], np.eye(3))

    def test_given_complex_flag_when_model_built_then_not_real(self):
        cfg = parse_config({"kind": "simulate", "model": {"complex_valued": True}})

        self.assertFalse(cfg.covariance_model().is_real)

    def test_given_sigma0_csv_when_separable_model_built_then_off_diagonal_kept(self):
        cfg = parse_config(
            {
                "kind": "simulate",
                "model": {"p": 3, "family": "exponential", "sigma0": SIGMA0_CSV},
            }
        )

        lag_zero = cfg.covariance_model().cov_array(np.zeros((1, 1)))[0]

        np.testing.assert_allclose(
            lag_zero, [[2.0, 0.5, 0.0], [0.5, 1.0, 0.25], [0.0, 0.25, 1.5]]
        )

    def test_given_sigma0_csv_of_other_dimension_when_parsed_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            parse_config({"kind": "simulate", "model": {"p": 2, "sigma0": SIGMA0_CSV}})

    def test_given_sigma0_csv_and_variances_when_parsed_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            parse_config(
                {
                    "kind": "simulate",
                    "model": {"p": 3, "sigma0": SIGMA0_CSV, "variances": [1.0, 1.0, 1.0]},
                }
            )

    def test_given_indefinite_sigma0_csv_when_parsed_then_config_error_raised(self):
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = Path(tmp_dir) / "sigma0.csv"
            path.write_text("1.0,2.0\n2.0,1.0\n")

            with self.assertRaises(ConfigError):
                parse_config({"kind": "simulate", "model": {"p": 2, "sigma0": str(path)}})

    def test_given_missing_sigma0_csv_when_parsed_then_config_error_raised(self):
        with self.assertRaises(ConfigError):
            parse_config({"kind": "simulate", "model": {"sigma0": "tests/unit/missing.csv"}})

    def test_given_kernel_block_when_spec_built_then_dimension_follows_model(self):
        cfg = parse_config({"kind": "estimate", "model": {"d": 2}, "kernel": {"lam": 3}})

        spec = cfg.kernel_spec()

        self.assertEqual(spec.d, 2)
        self.assertEqual(spec.lam, 3)


class TestRenderConfig(unittest.TestCase):
    def test_given_config_when_rendered_then_reloads_to_same_config(self):
        for kind in (ExperimentKind.RATES, ExperimentKind.CLT, ExperimentKind.SIMULATE):
            cfg = default_config(kind)

            reloaded = config_from_hcl(hcl.loads(render_config(cfg)))

            self.assertEqual(reloaded, cfg)

    def test_given_threads_when_rendered_then_left_out(self):
        cfg = default_config(ExperimentKind.RATES).with_overrides(threads=3)

        self.assertNotIn("threads", render_config(cfg))

    def test_given_other_seed_when_contents_compared_then_match(self):
        cfg = default_config(ExperimentKind.RATES)

        self.assertTrue(
            config_content_matches(
                render_config(cfg), render_config(cfg.with_overrides(master_seed=99))
            )
        )

    def test_given_other_replicates_when_contents_compared_then_differ(self):
        cfg = default_config(ExperimentKind.RATES)

        self.assertFalse(
            config_content_matches(
                render_config(cfg), render_config(cfg.with_overrides(replicates=50))
            )
        )
