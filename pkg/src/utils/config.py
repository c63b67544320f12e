"""
Configuration Management
========================

Handles application configuration with schema validation.

The configuration lives in ``config.yaml`` under the application home
directory and covers compiler defaults, execution defaults, device descriptor
paths and the ctrl-VQE demo settings.
"""

import copy
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from cerberus import Validator

from .log import default_home, logger

DEVICES_ENV = "PULSESTACK_DEVICES"
BUNDLED_DEVICE = Path(__file__).resolve().parents[2] / "data" / "devices" / "sim.json"


class ConfigValidator:
    """Validates configuration data using schemas."""

    SCHEMA = {
        'app': {
            'type': 'dict',
            'schema': {
                'name': {'type': 'string', 'maxlength': 100},
                'version': {'type': 'string', 'regex': r'^\d+\.\d+\.\d+$'},
                'log_level': {'type': 'string', 'allowed': ['DEBUG', 'INFO', 'WARNING', 'ERROR']}
            }
        },
        'compiler': {
            'type': 'dict',
            'schema': {
                'passes': {'type': 'list', 'schema': {'type': 'string', 'regex': r'^[a-z_]+$'}},
                'legalization_mode': {'type': 'string', 'allowed': ['strict', 'pad']}
            }
        },
        'execution': {
            'type': 'dict',
            'schema': {
                'shots': {'type': 'integer', 'min': 1, 'max': 10_000_000},
                'seed': {'type': 'integer', 'min': 0},
                'job_timeout_s': {'type': 'number', 'min': 0.001},
                'max_retained_jobs': {'type': 'integer', 'min': 1}
            }
        },
        'devices': {
            'type': 'dict',
            'schema': {
                'paths': {'type': 'list', 'schema': {'type': 'string'}}
            }
        },
        'vqe': {
            'type': 'dict',
            'schema': {
                'iterations': {'type': 'integer', 'min': 0, 'max': 100_000},
                'initial_step_amp': {'type': 'number', 'min': 0.0, 'max': 1.0},
                'initial_step_phase': {'type': 'number', 'min': 0.0},
                'initial_step_duration': {'type': 'integer', 'min': 1}
            }
        }
    }

    def __init__(self):
        # Unknown keys are tolerated so newer config files still load
        self.validator = Validator(self.SCHEMA, allow_unknown=True)

    def validate(self, config: Dict[str, Any]) -> bool:
        if not isinstance(config, dict):
            return False
        return self.validator.validate(config)

    def get_errors(self) -> Dict[str, Any]:
        return self.validator.errors or {}


class PulseStackConfig:
    """Configuration manager backed by a validated YAML file."""

    DEFAULT_CONFIG = {
        'app': {
            'name': 'Pulse Stack',
            'version': '1.0.0',
            'log_level': 'WARNING'
        },
        'compiler': {
            'passes': ['verify', 'merge_delays', 'fold_phase', 'legalize', 'resolve_timing'],
            'legalization_mode': 'strict'
        },
        'execution': {
            'shots': 1000,
            'seed': 1234,
            'job_timeout_s': 60.0,
            'max_retained_jobs': 10000
        },
        'devices': {
            'paths': []
        },
        'vqe': {
            'iterations': 200,
            'initial_step_amp': 0.1,
            'initial_step_phase': 0.5,
            'initial_step_duration': 8
        }
    }

    def __init__(self, config_dir: Optional[Path] = None):
        self.config_dir = config_dir or default_home()
        self.config_file = self.config_dir / 'config.yaml'

        self.validator = ConfigValidator()
        self._config: Dict[str, Any] = {}

        self._load_config()

    def _defaults(self) -> Dict[str, Any]:
        return copy.deepcopy(self.DEFAULT_CONFIG)

    def _load_config(self):
        """Load configuration from file, writing defaults when missing."""
        try:
            if self.config_file.exists():
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    loaded = yaml.safe_load(f) or {}
                self._config = self._defaults()
                self._deep_update(self._config, loaded)
            else:
                self._config = self._defaults()
                self._save_config()

            if not self.validator.validate(self._config):
                logger.warning("Invalid config, using defaults", errors=self.validator.get_errors())
                self._config = self._defaults()

        except (OSError, yaml.YAMLError) as e:
            logger.error("Failed to load config", exception=e)
            self._config = self._defaults()

    def _save_config(self):
        if not self.validator.validate(self._config):
            raise ValueError(f"Invalid configuration: {self.validator.get_errors()}")
        try:
            self.config_dir.mkdir(parents=True, exist_ok=True)
            with open(self.config_file, 'w', encoding='utf-8') as f:
                yaml.safe_dump(self._config, f, default_flow_style=False, sort_keys=True)
            logger.debug("Configuration saved", path=str(self.config_file))
        except OSError as e:
            # Best effort: an unwritable home must not stop the compiler
            logger.warning("Could not persist configuration", error=str(e))

    @staticmethod
    def _deep_update(base: Dict, updates: Dict):
        for key, value in updates.items():
            if isinstance(value, dict) and key in base and isinstance(base[key], dict):
                PulseStackConfig._deep_update(base[key], value)
            else:
                base[key] = value

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value by key (dot notation supported)."""
        value: Any = self._config
        try:
            for k in key.split('.'):
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key: str, value: Any):
        """Set configuration value by key (dot notation supported)."""
        keys = key.split('.')
        candidate = copy.deepcopy(self._config)
        node = candidate
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value

        if not self.validator.validate(candidate):
            raise ValueError(f"Invalid value for {key}: {self.validator.get_errors()}")
        self._config = candidate
        self._save_config()

    def update(self, updates: Dict[str, Any]):
        candidate = copy.deepcopy(self._config)
        self._deep_update(candidate, updates)
        if not self.validator.validate(candidate):
            raise ValueError(f"Invalid configuration update: {self.validator.get_errors()}")
        self._config = candidate
        self._save_config()

    def reset_to_defaults(self):
        self._config = self._defaults()
        self._save_config()

    def device_paths(self) -> List[Path]:
        """Descriptor paths: env var, then config, then the bundled simulator."""
        env = os.environ.get(DEVICES_ENV, "")
        paths = [p for p in env.split(os.pathsep) if p]
        if not paths:
            paths = list(self.get('devices.paths', []) or [])
        if not paths:
            return [BUNDLED_DEVICE]
        return [Path(p).expanduser() for p in paths]


# Global configuration instance
config = PulseStackConfig()
logger.set_level(config.get('app.log_level', 'WARNING'))
