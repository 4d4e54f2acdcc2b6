import logging
import os
from typing import Optional

from .constants import DEFAULT_CHUNK_SIZE
from .errors import ConfigError

# Worker threads (env overrides the --threads flag)
BRIDGESIM_THREADS = os.environ.get("BRIDGESIM_THREADS")

# Log level for the CLI JSON handler
LOG_LEVEL = getattr(logging, os.environ.get("BRIDGESIM_LOG_LEVEL", "INFO").upper(), logging.INFO)

# Paths per worker chunk; fixed per run so output does not depend on thread count
CHUNK_SIZE = int(os.environ.get("BRIDGESIM_CHUNK_SIZE", DEFAULT_CHUNK_SIZE))


def resolve_threads(cli_value: Optional[int]) -> int:
    """BRIDGESIM_THREADS wins over the CLI flag; default is one thread."""
    env = os.environ.get("BRIDGESIM_THREADS", BRIDGESIM_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError([f"BRIDGESIM_THREADS: expected an integer, got '{env}'"]) from None
    if cli_value:
        return max(1, int(cli_value))
    return 1

# Extra invariant assertions inside the integrators (dispersion symmetry)
DEBUG_CHECKS = os.environ.get("BRIDGESIM_DEBUG", "0") == "1"
