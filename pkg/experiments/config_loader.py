"""
Experiment configuration loading: strict JSON parsing, validation and emission.
"""

import json
import os
import warnings
from typing import Any, Dict, Optional, Union

from pydantic import ValidationError

from models.config_models import ExperimentConfig
from spectral.errors import ConfigError
from utils.log_setup import get_logger

logger = get_logger('config_loader')

BASE_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
CONFIG_DIR = os.path.join(BASE_DIR, 'config')


class SmoothnessWarning(UserWarning):
    """A declared smoothness below the threshold s > 3d/2 - 1."""


def _dotted(loc) -> str:
    return '.'.join(str(part) for part in loc)


def parse_config(text: Union[str, bytes, dict]) -> ExperimentConfig:
    """Validate an experiment document; errors name the dotted path of the offending key."""
    try:
        data = json.loads(text) if isinstance(text, (str, bytes)) else text
    except json.JSONDecodeError as e:
        logger.error(f"Malformed config document: {e}")
        raise ConfigError(f"config is not valid JSON: {e}") from e
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        path = _dotted(first['loc'])
        logger.error(f"Config rejected at {path or '<root>'}: {first['msg']}")
        raise ConfigError(f"{path or '<root>'}: {first['msg']}", path=path) from e
    _warn_smoothness(config)
    return config


def _warn_smoothness(config: ExperimentConfig) -> None:
    if config.A is None or config.A.smoothness is None:
        return
    d = config.lattice.d
    threshold = 1.5 * d - 1
    if config.A.smoothness <= threshold:
        message = (f"A declares smoothness s={config.A.smoothness} <= 3d/2 - 1 = {threshold} at d={d}; "
                   f"the lower bound is only expected for s > 3d/2 - 1")
        logger.warning(message)
        warnings.warn(message, SmoothnessWarning, stacklevel=3)


def emit_config(config: ExperimentConfig) -> str:
    """JSON text that parse_config reads back to an equal config."""
    return json.dumps(config.model_dump(mode='json'), indent=2)


def load_config(file_path: str, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Load and validate an experiment file; top-level overrides are applied before validation."""
    logger.debug(f"Loading config: {file_path}")
    if not os.path.exists(file_path):
        logger.error(f"Config file not found: {file_path}")
        raise ConfigError(f"config file not found: {file_path}")
    with open(file_path, 'r', encoding='utf-8') as f:
        text = f.read()
    if not overrides:
        return parse_config(text)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        logger.error(f"Malformed config document: {e}")
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object")
    data.update(overrides)
    return parse_config(data)
