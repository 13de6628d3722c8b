from contextlib import contextmanager
import logging
import time

import humanfriendly
from modelforge.slogging import *  # noqa


@contextmanager
def log_duration(log: logging.Logger, what: str):
    """
    Measure the wall time of the enclosed block and log it at the INFO level.

    The yielded list receives the elapsed seconds as its only element once the block exits.

    :param log: Logger to write to.
    :param what: Human-readable name of the measured stage.
    """
    elapsed = []
    start = time.perf_counter()
    try:
        yield elapsed
    finally:
        delta = time.perf_counter() - start
        elapsed.append(delta)
        log.info("%s took %s", what, humanfriendly.format_timespan(delta))
