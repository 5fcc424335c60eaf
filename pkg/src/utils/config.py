"""
Configuration management module
Handles loading, saving, and merging run settings with command-line overrides
"""

import copy
import json
import logging
import os
from typing import Any, Dict, Mapping, Optional

from core.errors import ConfigError
from core.geometry import ProtocolConfig

logger = logging.getLogger(__name__)

THREADS_ENV = "WTRANSFER_THREADS"


class ConfigManager:
    """Manages run configuration"""

    DEFAULT_CONFIG = {
        "protocol": {
            "d": 1,
            "alpha": 1.0,
            "h0": 1.0,
            "n": 4,
            "variant": "nested",
            "beta": 1.0,
            "epsilon": 0.0,
            "m": 1,
            "seed": 20200101,
            "convention": "corrected",
            "center_rule": "bracket",
            "redraw": "per_step"
        },
        "limits": {
            "max_sites": 16384,
            "max_family_depth": 12
        },
        "experiment": {
            "trials": 100,
            "threads": 0,
            "format": "csv",
            "out": None,
            "gamma": 1.0
        }
    }

    def __init__(self, config_path: Optional[str] = None, strict: bool = False):
        """
        Initialize configuration manager

        Args:
            config_path: Path to a JSON configuration file
            strict: Raise instead of falling back to defaults when the file is missing
        """
        self.config_path = config_path
        self.strict = strict
        self.config = copy.deepcopy(self.DEFAULT_CONFIG)
        self.load()

    def load(self):
        """Load configuration from file"""
        if not self.config_path:
            return
        if not os.path.exists(self.config_path):
            if self.strict:
                raise ConfigError(f"Config file not found: {self.config_path}")
            logger.info("No config file found. Using default configuration.")
            return
        try:
            with open(self.config_path, 'r') as f:
                loaded_config = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON in {self.config_path}: {e}") from e
        if not isinstance(loaded_config, dict):
            raise ConfigError(f"{self.config_path} must hold a JSON object")
        # Merge with defaults to ensure all keys exist
        self._deep_merge(self.config, loaded_config)
        logger.info(f"Configuration loaded from {self.config_path}")

    def save(self, path: Optional[str] = None):
        """Save configuration to file"""
        path = path or self.config_path
        if not path:
            raise ConfigError("No path to save configuration to")
        try:
            with open(path, 'w') as f:
                json.dump(self.config, f, indent=4)
        except OSError as e:
            raise OSError(f"Could not write configuration to {path}: {e}") from e
        logger.info(f"Configuration saved to {path}")

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """
        Get configuration value

        Args:
            section: Configuration section
            key: Configuration key
            default: Default value if key not found

        Returns:
            Configuration value
        """
        return self.config.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value: Any):
        """
        Set configuration value

        Args:
            section: Configuration section
            key: Configuration key
            value: Value to set
        """
        if section not in self.config:
            self.config[section] = {}
        self.config[section][key] = value

    def get_section(self, section: str) -> Dict[str, Any]:
        """
        Get entire configuration section

        Args:
            section: Section name

        Returns:
            Dictionary of section configuration
        """
        return self.config.get(section, {})

    def reset_to_defaults(self):
        """Reset configuration to defaults"""
        self.config = copy.deepcopy(self.DEFAULT_CONFIG)
        logger.info("Configuration reset to defaults")

    def apply_overrides(self, section: str, overrides: Mapping[str, Any]):
        """Set every non-None override in a section"""
        for key, value in overrides.items():
            if value is not None:
                self.set(section, key, value)

    def protocol_config(self) -> ProtocolConfig:
        """Validated protocol parameters"""
        return ProtocolConfig.from_mapping(self.get_section("protocol"))

    def threads(self) -> int:
        """Worker count from the config, then the environment, then the CPU count"""
        value = self.get("experiment", "threads", 0) or os.environ.get(THREADS_ENV, "")
        try:
            count = int(value) if value not in ("", None) else 0
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
        if count < 0:
            raise ConfigError(f"Thread count must be nonnegative, got {count}")
        return count or os.cpu_count() or 1

    def _deep_merge(self, base: dict, update: dict):
        """
        Deep merge two dictionaries

        Args:
            base: Base dictionary to merge into
            update: Dictionary with updates
        """
        for key, value in update.items():
            if key in base and isinstance(base[key], dict) and isinstance(value, dict):
                self._deep_merge(base[key], value)
            else:
                base[key] = value
