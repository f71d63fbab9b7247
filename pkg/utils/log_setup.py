"""
Shared logging setup for Bloch Sentinel components.
Every component logs to logs/<name>.txt with the user-tagged format.
"""

import os
import logging
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
LOG_FORMAT = '%(asctime)s - %(levelname)s - User: %(user)s - %(message)s'


class UserFilter(logging.Filter):
    """Add the component's user field to log records."""

    def __init__(self, user_id: str):
        super().__init__()
        self.user_id = user_id

    def filter(self, record):
        record.user = self.user_id
        return True


def log_dir() -> str:
    path = os.getenv('BLOCH_LOG_DIR') or os.path.join(PROJECT_ROOT, 'logs')
    os.makedirs(path, exist_ok=True)
    return path


def log_level() -> int:
    name = os.getenv('BLOCH_LOG_LEVEL', 'INFO').upper()
    return getattr(logging, name, logging.INFO)


def get_logger(name: str, user_id: Optional[str] = None) -> logging.Logger:
    """Return the named logger with its file handler attached once."""
    logger = logging.getLogger(name)
    if getattr(logger, '_bloch_configured', False):
        return logger
    user_id = user_id or f'{name}_user'
    logger.setLevel(log_level())
    file_handler = logging.FileHandler(os.path.join(log_dir(), f'{name}.txt'), encoding='utf-8')
    file_handler.setLevel(log_level())
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    file_handler.addFilter(UserFilter(user_id))
    logger.handlers = [file_handler]
    logger.propagate = False
    logger._bloch_configured = True
    return logger


def attach_console(logger: logging.Logger, user_id: str) -> None:
    """Mirror a logger to stderr, as the command center does for interactive runs."""
    if any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
           for h in logger.handlers):
        return
    stream_handler = logging.StreamHandler()
    stream_handler.setLevel(log_level())
    stream_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    stream_handler.addFilter(UserFilter(user_id))
    logger.addHandler(stream_handler)
