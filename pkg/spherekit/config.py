# spherekit/config.py

import logging
import os

from dotenv import load_dotenv

load_dotenv() # Load environment variables from .env file

# Logging (stderr only; stdout is reserved for JSON reports)
LOG_LEVEL = os.getenv("LOG_LEVEL", "WARNING")

# HTTP service bind address
SPHEREKIT_HOST = os.getenv("SPHEREKIT_HOST", "127.0.0.1")
SPHEREKIT_PORT = int(os.getenv("SPHEREKIT_PORT", "8000"))

# Largest token count M accepted by gspe_matrix (the matrix is M x M float64)
SPHEREKIT_MAX_GSPE_TOKENS = int(os.getenv("SPHEREKIT_MAX_GSPE_TOKENS", "4096"))

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | int | None = None) -> None:
    """Installs a stderr handler on the root logger unless one is already configured."""
    resolved = level if level is not None else LOG_LEVEL
    if isinstance(resolved, str):
        resolved = logging.getLevelName(resolved.upper())
        if not isinstance(resolved, int):
            resolved = logging.WARNING
    logging.basicConfig(level=resolved, format=LOG_FORMAT)
