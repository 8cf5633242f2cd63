import json
import tempfile
import unittest
from pathlib import Path

import yaml

from bsde_cert.cli import main
from bsde_cert.config import Settings
from bsde_cert.errors import EXIT_CONFIG, EXIT_OK, ConfigError
from bsde_cert.presets import list_presets, load_experiment_file, load_preset

EXPERIMENTS_DIR = Path(__file__).resolve().parents[2] / "experiments"


class TestPresets(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, name, payload):
        path = self.root / name
        path.write_text(payload if isinstance(payload, str) else yaml.safe_dump(payload))
        return path

    def test_shipped_presets_load(self):
        presets = list_presets(Settings(experiments_dir=EXPERIMENTS_DIR))
        self.assertIn("cubic_certify", presets)
        self.assertIn("shifted_g_sweep", presets)
        self.assertEqual(presets["sublinear_nle"].command, "nle")
        for preset_id, preset in presets.items():
            self.assertTrue((EXPERIMENTS_DIR / f"{preset_id}.yaml").exists())

    def test_id_defaults_to_file_stem(self):
        path = self._write("mine.yaml", {"benchmark": "ZERO"})
        self.assertEqual(load_experiment_file(path).id, "mine")

    def test_invalid_files(self):
        with self.assertRaises(ConfigError) as ctx:
            load_experiment_file(self._write("q.yaml", {"benchmark": "ZERO", "q": 2.0}))
        self.assertEqual(ctx.exception.error_code, "invalid_preset")
        self.assertIn("q", ctx.exception.message)
        with self.assertRaises(ConfigError):
            load_experiment_file(self._write("list.yaml", "- 1\n- 2\n"))
        with self.assertRaises(ConfigError):
            load_experiment_file(self._write("broken.yaml", "id: [unclosed\n"))
        with self.assertRaises(ConfigError):
            load_experiment_file(
                self._write("p.yaml", {"benchmark": "P", "problems": {"P": {"driver": {"kind": "linear"}, "shape": 1}}})
            )

    def test_missing_preset(self):
        with self.assertRaises(ConfigError) as ctx:
            load_preset(Settings(experiments_dir=self.root), "nothing")
        self.assertEqual(ctx.exception.error_code, "preset_not_found")


class TestCommandLine(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_bench_list(self):
        self.assertEqual(main(["bench-list"]), EXIT_OK)

    def test_certify_writes_report(self):
        out = self.root / "zero.json"
        code = main(
            ["certify", "--benchmark", "ZERO", "--paths", "400", "--steps", "5", "--a", "0", "--out", str(out), "--fixed-timestamp"]
        )
        self.assertEqual(code, EXIT_OK)
        payload = json.loads(out.read_text())
        self.assertEqual(len(payload["reports"]), 8)
        self.assertEqual(payload["meta"]["seed"], 7)
        self.assertEqual(payload["reports"][0]["config"]["n_paths"], 400)

    def test_config_file_with_csv_output(self):
        config = self.root / "exp.yaml"
        config.write_text(yaml.safe_dump({"id": "exp", "benchmark": "ZERO", "paths": 300, "steps": 4, "a": 0.0, "seed": 11}))
        out = self.root / "exp.csv"
        code = main(["certify", "--config", str(config), "--format", "csv", "--out", str(out)])
        self.assertEqual(code, EXIT_OK)
        header = out.read_text().splitlines()[0].split(",")
        self.assertIn("inequality_id", header)
        self.assertIn("config.seed", header)

    def test_dump_solution(self):
        out = self.root / "sol.csv"
        code = main(["dump-solution", "--benchmark", "ZERO", "--paths", "10", "--steps", "2", "--out", str(out)])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(len(out.read_text().splitlines()), 1 + 10 * 3)

    def test_configuration_errors_exit_with_config_code(self):
        self.assertEqual(main(["certify", "--benchmark", "NOPE", "--paths", "50", "--steps", "4"]), EXIT_CONFIG)
        self.assertEqual(main(["certify"]), EXIT_CONFIG)
        self.assertEqual(main(["certify", "--benchmark", "ZERO", "--q", "1.5"]), EXIT_CONFIG)
        self.assertEqual(main(["certify", "--benchmark", "ZERO", "--paths", "50", "--steps", "4", "--a", "-1"]), EXIT_CONFIG)

    def test_bad_weight_is_a_usage_error(self):
        with self.assertRaises(SystemExit):
            main(["certify", "--benchmark", "ZERO", "--a", "heavy"])


if __name__ == '__main__':
    unittest.main(verbosity=2)
