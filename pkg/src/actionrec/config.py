"""Configuration files for the CLI.

A config is TOML or JSON with optional sections ``segmentation``,
``codebook``, ``detector``, ``action``, ``protocol`` and ``synth``; keys
match the long option names of the corresponding subcommand (dashes or
underscores). Command-line flags win over config values.
"""

import json
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError

SCHEMA_VERSION = 1


def parse_config(text):
    text = text.strip()
    if not text:
        return {}
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"config is neither JSON nor TOML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a table/object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported config schema_version {version}")
    return doc


def load_config(source):
    """Parse ``source``, a path to a config file or the config text itself."""
    if source is None:
        return {}
    path = Path(source)
    try:
        is_file = path.is_file()
    except OSError:
        is_file = False
    return parse_config(path.read_text() if is_file else source)


def section(config, name):
    sec = config.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigurationError(f"config section {name!r} must be a table")
    return {k.replace("-", "_"): v for k, v in sec.items()}
