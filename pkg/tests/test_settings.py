"""Tests for experiment configuration loading and validation."""

import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from src.config.settings import (
    EXPERIMENTS,
    OUTPUT_DIR_ENV,
    ExperimentConfig,
    emit_schema,
)
from src.core.errors import ConfigInvalid

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


class TestBundledConfigs(unittest.TestCase):

    def test_every_config_loads_and_round_trips(self):
        paths = sorted(CONFIG_DIR.glob("*.json"))
        self.assertGreaterEqual(len(paths), 10)
        for path in paths:
            with self.subTest(config=path.name):
                config = ExperimentConfig.load_from_file(path)
                self.assertIn(config.experiment, EXPERIMENTS)
                self.assertEqual(ExperimentConfig.from_dict(config.to_dict()), config)

    def test_every_experiment_has_defaults(self):
        for name in EXPERIMENTS:
            config = ExperimentConfig.load_defaults(name)
            self.assertEqual(config.experiment, name)
            self.assertEqual(config.quadrature.order, 24)
            self.assertEqual(config.system.masses, [1.0, 2.0, 3.0])


class TestValidation(unittest.TestCase):

    def assertInvalid(self, data, field):
        with self.assertRaises(ConfigInvalid) as ctx:
            ExperimentConfig.from_dict(data)
        self.assertEqual(ctx.exception.field, field)
        self.assertIn(field, str(ctx.exception))

    def test_unknown_experiment(self):
        self.assertInvalid({"experiment": "warp-drive"}, "experiment")

    def test_unknown_keys(self):
        self.assertInvalid({"experiment": "hermiticity", "sytem": {}}, "sytem")
        self.assertInvalid({"experiment": "hermiticity", "system": {"mass": [1.0]}}, "system.mass")
        self.assertInvalid({"experiment": "hermiticity", "params": {"trails": 3}}, "params.trails")

    def test_chart_with_zero_norm(self):
        self.assertInvalid({"experiment": "orbit-invariants",
                            "chart": {"type": "linear", "A": [0, 0, 0], "B": [0, 0, 0]}}, "chart.B")
        self.assertInvalid({"experiment": "hermiticity",
                            "chart": {"type": "linear_cm", "A": [1, 1, 1], "B": [1, 1, 1]}}, "chart.B")
        config = ExperimentConfig.from_dict({"experiment": "hermiticity",
                                             "chart": {"type": "linear", "A": [1, 1, 1], "B": [1, 1, 1]}})
        self.assertEqual(config.chart.A, [1.0, 1.0, 1.0])

    def test_param_types(self):
        self.assertInvalid({"experiment": "n1-spectrum", "params": {"n_radial": "four"}}, "params.n_radial")
        self.assertInvalid({"experiment": "n1-spectrum", "params": {"n_radial": 2.5}}, "params.n_radial")
        self.assertInvalid({"experiment": "n1-spectrum", "params": {"ells": [0, "one"]}}, "params.ells[1]")
        self.assertInvalid({"experiment": "hermiticity", "params": {"gauge_kinds": "linear"}},
                           "params.gauge_kinds")
        self.assertInvalid({"experiment": "hermiticity", "params": {"checks": ["hermiticity", 1]}},
                           "params.checks[1]")
        self.assertInvalid({"experiment": "eckart-spring", "params": {"n_workers": 0}}, "params.n_workers")
        self.assertInvalid({"experiment": "eckart-spring", "params": {"k": True}}, "params.k")
        self.assertInvalid({"experiment": "gauge-equivalence", "params": {"positions": "origin"}},
                           "params.positions")
        config = ExperimentConfig.from_dict({"experiment": "hermiticity", "params": {"trials": 3.0, "factor": 4}})
        self.assertEqual(config.params["trials"], 3)
        self.assertIsInstance(config.params["trials"], int)
        self.assertIsInstance(config.params["factor"], float)

    def test_removed_knobs_are_rejected(self):
        for name in ("algebra-verify", "eckart-order", "residual-verify", "orbit-invariants"):
            self.assertInvalid({"experiment": name, "params": {"n_particles": 3}}, "params.n_particles")

    def test_bad_values(self):
        self.assertInvalid({"experiment": "hermiticity", "system": {"masses": [1.0, -2.0]}},
                           "system.masses[1]")
        self.assertInvalid({"experiment": "hermiticity", "quadrature": {"order": 2.5}}, "quadrature.order")
        self.assertInvalid({"experiment": "hermiticity", "integrator": {"rtol": "tight"}}, "integrator.rtol")
        self.assertInvalid({"experiment": "hermiticity", "chart": {"type": "spiral"}}, "chart.type")

    def test_potentials(self):
        self.assertInvalid({"experiment": "n1-spectrum",
                            "system": {"body_potential": {"kind": "morse", "params": {}}}},
                           "system.body_potential.kind")
        self.assertInvalid({"experiment": "n1-spectrum",
                            "system": {"body_potential": {"kind": "harmonic_trap", "params": {}}}},
                           "system.body_potential.params.omega")
        config = ExperimentConfig.from_dict({
            "experiment": "n1-spectrum",
            "system": {"masses": [1], "body_potential": {"kind": "harmonic_trap", "params": {"omega": 2}}},
        })
        self.assertEqual(config.system.body_potential.params, {"omega": 2.0})
        self.assertIsNone(config.system.pair_potential)

    def test_params_merge_with_defaults(self):
        config = ExperimentConfig.from_dict({"experiment": "hermiticity", "params": {"trials": 3}})
        self.assertEqual(config.params["trials"], 3)
        self.assertEqual(config.params["factor"], 5.0)


class TestFiles(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_save_and_load(self):
        config = ExperimentConfig.load_defaults("eckart-spring")
        config.seed = 42
        path = self.dir / "nested" / "eckart.json"
        config.save_to_file(path)
        self.assertEqual(ExperimentConfig.load_from_file(path), config)

    def test_malformed_json_reports_position(self):
        path = self.dir / "broken.json"
        path.write_text('{"experiment": "hermiticity",\n  "seed": }\n')
        with self.assertRaises(ConfigInvalid) as ctx:
            ExperimentConfig.load_from_file(path)
        self.assertIn("line 2", str(ctx.exception))

    def test_missing_file(self):
        with self.assertRaises(ConfigInvalid):
            ExperimentConfig.load_from_file(self.dir / "absent.json")

    def test_output_dir_precedence(self):
        config = ExperimentConfig.load_defaults("orbit-invariants")
        with mock.patch.dict(os.environ, {OUTPUT_DIR_ENV: "/tmp/from-env"}):
            self.assertEqual(config.resolved_output_dir(), Path("/tmp/from-env"))
            self.assertEqual(config.resolved_output_dir("/tmp/flag"), Path("/tmp/flag"))
        with mock.patch.dict(os.environ, {}, clear=True):
            self.assertEqual(config.resolved_output_dir(), Path("results"))


class TestSchema(unittest.TestCase):

    def test_schema_lists_everything(self):
        schema = emit_schema()
        self.assertEqual(set(schema["params"]), set(EXPERIMENTS))
        self.assertEqual(schema["blocks"]["quadrature"]["order"], {"type": "integer", "default": 24})
        self.assertEqual(schema["blocks"]["system"]["pair_potential"]["type"], "potential|null")
        self.assertEqual(schema["blocks"]["chart"]["Z"]["type"], "array of [number, number]")
        self.assertEqual(schema["top_level"]["output_dir"]["env_override"], OUTPUT_DIR_ENV)
        json.dumps(schema)


if __name__ == '__main__':
    unittest.main()
