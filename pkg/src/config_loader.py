import os

import yaml
from dotenv import load_dotenv

from src.errors import ConfigError
from src.params import DEFAULTS, SimParams


class ConfigLoader:
    def __init__(self, config_file=None, overrides=None):
        load_dotenv()

        self.config_file = config_file or os.getenv('V2V_CONFIG', 'config.yaml')
        self.config = {}

        if self.config_file and os.path.exists(self.config_file):
            with open(self.config_file, 'r', encoding='utf-8') as f:
                try:
                    self.config = yaml.safe_load(f) or {}
                except yaml.YAMLError as e:
                    raise ConfigError(f"Cannot parse {self.config_file}: {e}") from e
        elif config_file:
            raise ConfigError(f"Config file not found: {config_file}")

        if not isinstance(self.config, dict):
            raise ConfigError(f"{self.config_file} must hold a mapping of flat keys")

        for key, value in (overrides or {}).items():
            if value is not None:
                self.config[key] = value

        unknown = sorted(set(self.config) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"Unknown config keys in {self.config_file}: {', '.join(unknown)}")

        self.log_level = os.getenv('V2V_LOG_LEVEL', 'INFO')
        self.log_dir = os.getenv('V2V_LOG_DIR', 'logs')

    def get(self, key, default=None):
        keys = key.split('.')
        value = self.config
        for k in keys:
            if isinstance(value, dict):
                value = value.get(k, default)
            else:
                return default
        return value

    def as_mapping(self):
        return dict(self.config)

    def params(self):
        """Validated SimParams for this configuration"""
        return SimParams.from_mapping(self.config)

    @property
    def slots(self) -> int:
        value = self.get('slots', DEFAULTS['slots'])
        return int(value) if value is not None else DEFAULTS['slots']

    @property
    def seed(self) -> int:
        value = self.get('seed', DEFAULTS['seed'])
        return int(value) if value is not None else DEFAULTS['seed']

    @property
    def policy(self) -> str:
        value = self.get('policy', DEFAULTS['policy'])
        return str(value) if value is not None else DEFAULTS['policy']

    @property
    def trace(self) -> bool:
        return bool(self.get('trace', False))
