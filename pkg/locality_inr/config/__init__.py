"""
Centralized Configuration Package for the Locality-Aware INR
"""

import logging
import os
import sys

# Pillow logs every PNG chunk at DEBUG
logging.getLogger("PIL").setLevel(logging.WARNING)

from .presets import EXPERIMENT_PRESETS, EXPERIMENT_KINDS, get_preset, list_presets
from .run_config import (
    RunConfig,
    OUTPUT_ROOT_ENV,
    apply_overrides,
    build_run_config,
    config_from_preset,
    parse_config_file,
    run_config_from_flat,
    write_config_file,
)

LOG_LEVEL_ENV = 'LINR_LOG_LEVEL'
LOG_FORMAT = '[%(name)s] %(message)s'


def configure_logging(level=None) -> logging.Logger:
    """One stream handler on the package logger; level from the argument, LINR_LOG_LEVEL, or INFO."""
    level = level or os.environ.get(LOG_LEVEL_ENV, 'INFO')
    logger = logging.getLogger('locality_inr')
    logger.setLevel(level.upper() if isinstance(level, str) else level)
    if not any(getattr(h, '_linr', False) for h in logger.handlers):
        handler = logging.StreamHandler(sys.stdout)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._linr = True
        logger.addHandler(handler)
    return logger


# Export all explicitly
__all__ = [
    'EXPERIMENT_PRESETS',
    'EXPERIMENT_KINDS',
    'get_preset',
    'list_presets',
    'RunConfig',
    'OUTPUT_ROOT_ENV',
    'apply_overrides',
    'build_run_config',
    'config_from_preset',
    'parse_config_file',
    'run_config_from_flat',
    'write_config_file',
    'LOG_LEVEL_ENV',
    'configure_logging',
]
