"""Tests for configuration management."""

import os
import shutil
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import yaml

from lemole.config import DEFAULT_CONFIG, ENDPOINT_ENV_VAR, Config
from lemole.errors import ConfigError


class TestConfig(unittest.TestCase):
    """Test cases for Config."""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def write(self, text: str) -> Path:
        path = self.test_dir / "config.yaml"
        path.write_text(text, encoding="utf-8")
        return path

    def test_defaults(self):
        config = Config()
        self.assertEqual(config.get("model.lookback"), 96)
        self.assertEqual(config.get("training.learning_rate"), 1e-3)
        self.assertIsNone(config.get("model.unknown"))
        self.assertEqual(config.get("model.unknown", 5), 5)

    def test_load_overrides_defaults(self):
        config = Config()
        config.load(str(self.write("model:\n  lookback: 48\ntraining:\n  seed: 1\n")))
        self.assertEqual(config.get("model.lookback"), 48)
        self.assertEqual(config.get("model.horizon"), 96)
        self.assertEqual(config.get("training.seed"), 1)

    def test_unknown_key_reports_line(self):
        path = self.write("model:\n  lookback: 48\ntraining:\n  learning_rte: 0.01\n")
        with self.assertRaises(ConfigError) as ctx:
            Config().load(str(path))
        self.assertEqual(ctx.exception.messages, ["line 4: unknown key 'training.learning_rte'"])

    def test_unknown_section(self):
        with self.assertRaises(ConfigError) as ctx:
            Config().load(str(self.write("optimizer:\n  lr: 1\n")))
        self.assertIn("line 1: unknown section 'optimizer'", ctx.exception.messages)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            Config().load(str(self.test_dir / "absent.yaml"))

    def test_set_rejects_unknown_key(self):
        with self.assertRaises(ConfigError):
            Config().set("training.lr", 0.1)

    def test_env_override(self):
        with patch.dict(os.environ, {ENDPOINT_ENV_VAR: "http://localhost:9000/embed"}):
            config = Config()
            config.load(str(self.write("provider:\n  kind: remote\n")))
        self.assertEqual(config.get("provider.endpoint"), "http://localhost:9000/embed")

    def test_save_writes_resolved_config(self):
        config = Config({"model": {"lookback": 24}})
        out = self.test_dir / "resolved.yaml"
        config.save(str(out))
        saved = yaml.safe_load(out.read_text())
        self.assertEqual(saved["model"]["lookback"], 24)
        self.assertEqual(set(saved), set(DEFAULT_CONFIG))

    def test_digest(self):
        a = Config({"training": {"seed": 1}})
        b = Config({"training": {"seed": 1}})
        c = Config({"training": {"seed": 2}})
        self.assertEqual(a.digest(), b.digest())
        self.assertNotEqual(a.digest(), c.digest())
        self.assertEqual(len(a.digest()), 16)

    def test_reset(self):
        config = Config({"model": {"lookback": 24}})
        config.reset()
        self.assertEqual(config.get("model.lookback"), 96)

    def test_bundled_configs_load(self):
        configs = Path(__file__).resolve().parents[3] / "configs"
        for path in sorted(configs.glob("*.yaml")):
            with self.subTest(config=path.name):
                config = Config()
                config.load(str(path))
                self.assertIn(config.get("provider.kind"), ("hash", "remote"))


if __name__ == "__main__":
    unittest.main()
