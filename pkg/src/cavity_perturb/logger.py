# logger.py
import logging
import os
import sys
from logging import Logger

ROOT_LOGGER = "cavity_perturb"


def get_logger(name: str = ROOT_LOGGER) -> Logger:
    # One-line JSON records on stdout, one handler per logger.
    handler = logging.StreamHandler(sys.stdout)
    formatter = logging.Formatter(
        '{"timestamp":"%(asctime)s","level":"%(levelname)s","name":"%(name)s","msg":"%(message)s"}'
    )
    handler.setFormatter(formatter)
    logger = logging.getLogger(name)
    if not logger.handlers:
        logger.addHandler(handler)
        logger.propagate = False
    logger.setLevel(os.getenv("CAVITY_PERTURB_LOG_LEVEL", "INFO").upper())
    return logger


def set_verbosity(verbose: bool) -> None:
    """Switch every cavity_perturb logger between INFO and DEBUG."""
    level = logging.DEBUG if verbose else logging.INFO
    for name in list(logging.root.manager.loggerDict):
        if name == ROOT_LOGGER or name.startswith(ROOT_LOGGER + "."):
            logging.getLogger(name).setLevel(level)
