import logging
from typing import Optional

from .config import Config

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def configure_logging(level: Optional[str] = None) -> None:
    """Configures the package logger once per process"""
    root = logging.getLogger('g2moduli')
    root.setLevel((level or Config.LOG_LEVEL).upper())
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
