"""
Flat key=value run configuration, read with python-dotenv.

Keys are the CLI flag names; command-line flags override file values, which
override the library defaults.
"""

import logging
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Union

from dotenv import dotenv_values

logger = logging.getLogger(__name__)

TRUE_WORDS = {"1", "true", "yes", "on"}
FALSE_WORDS = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    """Malformed or unknown configuration entry"""


def parse_bool(text: str) -> bool:
    word = str(text).strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


KEY_TYPES: Dict[str, Callable[[str], Any]] = {
    "dt": float,
    "c": float,
    "k": float,
    "sigma": float,
    "rho": float,
    "iters": int,
    "eps": float,
    "init": str,
    "clamp": parse_bool,
    "method": str,
    "snapshot-every": int,
    "tv-eps": float,
    "c1": float,
    "c2": float,
    "stop-tol": float,
    "k-paper-scale": parse_bool,
    "threads": int,
}


class Config:
    def __init__(self, config_file: Optional[Union[str, Path]] = None):
        self.config_file = Path(config_file) if config_file else None
        self.values: Dict[str, Any] = {}
        if self.config_file is not None:
            self.load_config()

    def load_config(self):
        """Load configuration from file"""
        if not self.config_file.is_file():
            raise FileNotFoundError(f"no such config file: {self.config_file}")
        for key, text in dotenv_values(self.config_file).items():
            if text is None:
                raise ConfigError(f"{self.config_file}: key {key!r} has no value")
            self.set(key, text)
        logger.debug("loaded %d settings from %s", len(self.values), self.config_file)

    def save_config(self, path: Optional[Union[str, Path]] = None):
        """Save configuration to file, one key=value per line"""
        target = Path(path) if path else self.config_file
        if target is None:
            raise ConfigError("no config file to save to")
        lines = [f"{key}={_render(value)}" for key, value in sorted(self.values.items())]
        target.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def set(self, key: str, value: Any):
        key = key.strip().lower().replace("_", "-")
        if key not in KEY_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            self.values[key] = KEY_TYPES[key](value) if isinstance(value, str) else value
        except ValueError as e:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from e

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)

    def resolve(self, key: str, flag_value: Any, default: Any = None) -> Any:
        """flag > file > default"""
        if flag_value is not None:
            return flag_value
        return self.values.get(key, default)


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)
