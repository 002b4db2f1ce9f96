"""Tests for configuration checks."""

import shutil
import tempfile
import unittest
from pathlib import Path

from lemole.checks import (
    check_dataset,
    check_model,
    check_output_dir,
    check_provider,
    check_split,
    run_all_checks,
)
from lemole.config import Config


class TestChecks(unittest.TestCase):
    """Test cases for run checks."""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_check_dataset(self):
        success, message = check_dataset(Config())
        self.assertTrue(success)
        self.assertTrue(message.startswith("✓"))

        success, message = check_dataset(Config({"dataset": {"preset": "ETTh1"}}))
        self.assertFalse(success)

        success, message = check_dataset(Config({"dataset": {"path": str(self.test_dir / "x.csv")}}))
        self.assertFalse(success)
        self.assertIn("does not exist", message)

    def test_check_split(self):
        self.assertTrue(check_split(Config())[0])
        success, message = check_split(Config({"split": {"train": 0.8}}))
        self.assertFalse(success)
        self.assertFalse(message.startswith("✓"))

    def test_check_model(self):
        success, message = check_model(Config())
        self.assertTrue(success)
        self.assertIn("[96, 48, 24]", message)

        success, _ = check_model(Config({"model": {"window_lengths": [200, 100, 50]}}))
        self.assertFalse(success)

        success, message = check_model(Config({"training": {"learning_rate": -1}}))
        self.assertFalse(success)
        self.assertIn("learning_rate", message)

    def test_check_provider(self):
        self.assertTrue(check_provider(Config())[0])
        self.assertFalse(check_provider(Config({"provider": {"kind": "remote"}}))[0])
        self.assertFalse(check_provider(Config({"provider": {"kind": "file"}}))[0])
        self.assertFalse(check_provider(Config({"provider": {"kind": "bert"}}))[0])

    def test_check_output_dir(self):
        config = Config({"output": {"dir": str(self.test_dir / "runs" / "a")}})
        success, message = check_output_dir(config)
        self.assertTrue(success)
        self.assertTrue(message.startswith("✓"))

    def test_run_all_checks(self):
        success, messages = run_all_checks(Config({"output": {"dir": str(self.test_dir)}}))
        self.assertTrue(success)
        self.assertEqual(len(messages), 5)
        self.assertTrue(all(m.startswith("✓") for m in messages))

        success, messages = run_all_checks(Config({"split": {"test": 0.5}}))
        self.assertFalse(success)
        self.assertEqual(sum(not m.startswith("✓") for m in messages), 1)


if __name__ == "__main__":
    unittest.main()
