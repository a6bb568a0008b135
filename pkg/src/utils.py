import logging
import os
import sys

LOGGER_NAME = "nehari"

_VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG}


def initialize_logger(output_path=None, verbosity=1):
    """
    Configures the package logger.

    Parameters
    ----------
    output_path : str or None, optional
        Directory to write `nehari.log` into. If None, only the stream
        handler is attached.
    verbosity : {0, 1, 2}, optional
        Default is 1.

            * 0 - Only warnings will be logged.
            * 1 - Information and warnings will be logged.
            * 2 - Debug messages, information, and warnings will all be\
                  logged.

    """
    logger = logging.getLogger(LOGGER_NAME)
    # Repeated CLI invocations in one process must not stack handlers.
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(_VERBOSITY_LEVELS.get(verbosity, logging.DEBUG))
    logger.propagate = False

    formatter = logging.Formatter("%(asctime)s - %(message)s")

    stream_handle = logging.StreamHandler(sys.stderr)
    stream_handle.setFormatter(formatter)
    logger.addHandler(stream_handle)

    if output_path is not None:
        os.makedirs(output_path, exist_ok=True)
        file_handle = logging.FileHandler(os.path.join(output_path, "nehari.log"))
        file_handle.setFormatter(formatter)
        logger.addHandler(file_handle)
    return logger


def history_logger(name, out_filepath):
    """
    Returns a message-only logger writing to `<out_filepath>/<name>.txt`,
    used for tab-separated iteration histories.
    """
    logger = logging.getLogger("{0}.{1}".format(LOGGER_NAME, name))
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(logging.INFO)
    logger.propagate = False
    formatter = logging.Formatter("%(message)s")
    file_handle = logging.FileHandler(
        os.path.join(out_filepath, "{0}.txt".format(name)), mode="w"
    )
    file_handle.setFormatter(formatter)
    logger.addHandler(file_handle)
    return logger


def close_logger(logger):
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
