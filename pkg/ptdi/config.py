import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from ptdi.errors import ConfigError

load_dotenv()

# ==============================
# ENVIRONMENT SETTINGS
# ==============================

LOG_LEVEL = os.getenv("PTDI_LOG_LEVEL", "INFO")
DEFAULT_WORKERS = int(os.getenv("PTDI_WORKERS", "1"))
DEFAULT_TRIALS = int(os.getenv("PTDI_TRIALS", "1000"))
DEFAULT_ETA = float(os.getenv("PTDI_ETA", "0.05"))

COMMAND_NAMES = (
    "score",
    "identify",
    "estimate",
    "evaluate",
    "sweep",
    "simulate",
    "bias",
    "plotdata",
)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: Optional[str] = None) -> None:
    """Send log records to stderr; stdout carries command results."""
    resolved = (level or LOG_LEVEL).upper()
    if not isinstance(logging.getLevelName(resolved), int):
        raise ConfigError(f"Unknown log level {level!r}")
    logging.basicConfig(level=resolved, format=LOG_FORMAT, force=True)


# ==============================
# CONFIG FILE
# ==============================

def _normalize_keys(options: Dict[str, Any]) -> Dict[str, Any]:
    return {str(key).replace("-", "_"): value for key, value in options.items()}


def load_config_file(path: str | Path) -> Dict[str, Dict[str, Any]]:
    """
    Read a YAML config file into a click default_map.
    Top-level keys are command names, nested keys their option names.
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError(f"Cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"Invalid YAML in config file {path}: {exc}") from exc

    if document is None:
        return {}
    if not isinstance(document, dict):
        raise ConfigError(f"Config file {path} must contain a mapping of command names")

    default_map: Dict[str, Dict[str, Any]] = {}
    for command, options in document.items():
        if command not in COMMAND_NAMES:
            raise ConfigError(f"Unknown command {command!r} in config file {path}")
        if options is None:
            continue
        if not isinstance(options, dict):
            raise ConfigError(f"Options for {command!r} must be a mapping")
        default_map[command] = _normalize_keys(options)
    return default_map
