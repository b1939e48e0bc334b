import logging
import logging.config
import pathlib

LOGGING_INI = pathlib.Path(__file__).resolve().parent.parent.parent / "logging.ini"


def configure_logging(verbose: bool = False) -> None:
    """Load logging.ini once; ``verbose`` lifts the app logger to DEBUG."""
    if LOGGING_INI.exists():
        logging.config.fileConfig(LOGGING_INI, disable_existing_loggers=False)
    else:
        logging.basicConfig(format="%(levelname)-5.5s [%(name)s] %(message)s")
    if verbose:
        logging.getLogger("app").setLevel(logging.DEBUG)
