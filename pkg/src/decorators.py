"""Command decorators."""

from functools import wraps

from .config import logger
from .errors import EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, ConfigError, NumericalError


def exit_codes(func):
    """Decorator turning a command's exceptions into exit codes (0 ok, 1 config, 2 numerical, 3 I/O)."""
    @wraps(func)
    def wrapped(*args, **kwargs):
        try:
            code = func(*args, **kwargs)
        except ConfigError as e:
            logger.error("configuration error: %s", e)
            return EXIT_CONFIG
        except NumericalError as e:
            logger.error("numerical failure: %s", e)
            return EXIT_NUMERICAL
        except OSError as e:
            logger.error("I/O error: %s", e)
            return EXIT_IO
        return EXIT_OK if code is None else code

    return wrapped
