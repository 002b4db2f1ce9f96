"""Tests for the package surface and logging setup."""

import logging
import shutil
import tempfile
import unittest
from pathlib import Path

import lemole
from lemole.logging_config import setup_logging


class TestInit(unittest.TestCase):
    """Test cases for package initialization."""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        for handler in logging.getLogger().handlers[:]:
            handler.close()
            logging.getLogger().removeHandler(handler)
        shutil.rmtree(self.test_dir)

    def test_exports(self):
        self.assertEqual(lemole.__version__, "0.1.0")
        for name in lemole.__all__:
            self.assertTrue(hasattr(lemole, name), name)

    def test_setup_logging_writes_file(self):
        log_file = self.test_dir / "logs" / "lemole.log"
        setup_logging(str(log_file), logging.DEBUG)
        logging.getLogger("lemole.test").info("hello from the test")
        for handler in logging.getLogger().handlers:
            handler.flush()
        self.assertIn("hello from the test", log_file.read_text())
        self.assertEqual(logging.getLogger("urllib3").level, logging.WARNING)

    def test_setup_logging_replaces_handlers(self):
        setup_logging(str(self.test_dir / "first.log"))
        first = [h for h in logging.getLogger().handlers if isinstance(h, logging.FileHandler)]
        setup_logging(str(self.test_dir / "second.log"))
        self.assertEqual(len(first), 1)
        self.assertIsNone(first[0].stream)
        self.assertEqual(len(logging.getLogger().handlers), 2)
        self.assertNotIn(first[0], logging.getLogger().handlers)


if __name__ == "__main__":
    unittest.main()
