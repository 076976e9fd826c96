from typing import Any, Dict, Optional

import click

from .infra.config import Config
from .infra.log import configure_logging


def create_app(test_config: Optional[Dict[str, Any]] = None) -> click.Group:
    """Configures the package and returns the command group"""
    for key, value in (test_config or {}).items():
        setattr(Config, key, value)
    configure_logging()

    from .commands.job_commands import jobs
    return jobs
