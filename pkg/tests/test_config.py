"""
Configuration and Logging Tests
===============================
"""

import os
import shutil
import sys
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import yaml

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT))

from src.utils.config import BUNDLED_DEVICE, DEVICES_ENV, PulseStackConfig
from src.utils.log import StructuredLogger


class TempDirTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, True)


class TestPulseStackConfig(TempDirTestCase):

    def test_defaults_written_on_first_use(self):
        cfg = PulseStackConfig(config_dir=self.tmp)
        self.assertTrue((self.tmp / 'config.yaml').exists())
        self.assertEqual(cfg.get('execution.shots'), 1000)
        self.assertEqual(cfg.get('compiler.legalization_mode'), 'strict')
        self.assertEqual(cfg.get('compiler.passes')[-1], 'resolve_timing')
        self.assertEqual(cfg.get('no.such.key', 7), 7)

    def test_set_persists(self):
        cfg = PulseStackConfig(config_dir=self.tmp)
        cfg.set('execution.shots', 50)
        cfg.set('vqe.iterations', 12)
        again = PulseStackConfig(config_dir=self.tmp)
        self.assertEqual(again.get('execution.shots'), 50)
        self.assertEqual(again.get('vqe.iterations'), 12)

    def test_invalid_values_rejected(self):
        cfg = PulseStackConfig(config_dir=self.tmp)
        with self.assertRaises(ValueError):
            cfg.set('execution.shots', 0)
        with self.assertRaises(ValueError):
            cfg.set('compiler.legalization_mode', 'fuzzy')
        with self.assertRaises(ValueError):
            cfg.update({'compiler': {'passes': ['Verify!']}})
        self.assertEqual(cfg.get('execution.shots'), 1000)
        self.assertEqual(cfg.get('compiler.legalization_mode'), 'strict')

    def test_partial_file_merges_with_defaults(self):
        (self.tmp / 'config.yaml').write_text(yaml.safe_dump({'execution': {'seed': 9}}), encoding='utf-8')
        cfg = PulseStackConfig(config_dir=self.tmp)
        self.assertEqual(cfg.get('execution.seed'), 9)
        self.assertEqual(cfg.get('execution.shots'), 1000)

    def test_invalid_file_falls_back_to_defaults(self):
        (self.tmp / 'config.yaml').write_text(yaml.safe_dump({'execution': {'shots': -5}}), encoding='utf-8')
        self.assertEqual(PulseStackConfig(config_dir=self.tmp).get('execution.shots'), 1000)
        (self.tmp / 'config.yaml').write_text("execution: [unclosed", encoding='utf-8')
        self.assertEqual(PulseStackConfig(config_dir=self.tmp).get('execution.shots'), 1000)

    def test_update_and_reset(self):
        cfg = PulseStackConfig(config_dir=self.tmp)
        cfg.update({'vqe': {'initial_step_amp': 0.05}, 'devices': {'paths': ['a.json']}})
        self.assertEqual(cfg.get('vqe.initial_step_amp'), 0.05)
        self.assertEqual(cfg.get('vqe.iterations'), 200)
        cfg.reset_to_defaults()
        self.assertEqual(cfg.get('devices.paths'), [])


class TestDevicePaths(TempDirTestCase):

    def test_bundled_device_by_default(self):
        cfg = PulseStackConfig(config_dir=self.tmp)
        with patch.dict(os.environ):
            os.environ.pop(DEVICES_ENV, None)
            self.assertEqual(cfg.device_paths(), [BUNDLED_DEVICE])
        self.assertTrue(BUNDLED_DEVICE.exists())

    def test_configured_paths(self):
        cfg = PulseStackConfig(config_dir=self.tmp)
        cfg.set('devices.paths', ['lab/dev_a.json', 'lab/dev_b.json'])
        with patch.dict(os.environ):
            os.environ.pop(DEVICES_ENV, None)
            self.assertEqual(cfg.device_paths(), [Path('lab/dev_a.json'), Path('lab/dev_b.json')])

    def test_environment_wins(self):
        cfg = PulseStackConfig(config_dir=self.tmp)
        cfg.set('devices.paths', ['lab/dev_a.json'])
        with patch.dict(os.environ, {DEVICES_ENV: os.pathsep.join(['x.json', 'y.json'])}):
            self.assertEqual(cfg.device_paths(), [Path('x.json'), Path('y.json')])


class TestStructuredLogger(TempDirTestCase):

    def test_key_value_records_reach_the_log_file(self):
        name = f"pulsestack.test.{self.tmp.name}"
        log = StructuredLogger(name, log_dir=self.tmp)
        log.info("Job queued", shots=10)
        log.audit("cancel_job", job="abc")
        log.error("Command failed", exception=ValueError("bad shots"))
        text = (self.tmp / f"{name}.log").read_text(encoding='utf-8')
        self.assertIn("event='Job queued'", text)
        self.assertIn("shots=10", text)
        self.assertIn("action='cancel_job'", text)
        self.assertIn("error_type='ValueError'", text)

    def test_set_level(self):
        log = StructuredLogger(f"pulsestack.level.{self.tmp.name}", log_dir=self.tmp)
        log.set_level('debug')
        with self.assertRaises(ValueError):
            log.set_level('chatty')


if __name__ == '__main__':
    unittest.main()
